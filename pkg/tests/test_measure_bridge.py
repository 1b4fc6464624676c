import numpy as np
import pytest

from modules.errors import InputDomainError, ReportFormatError, ResolutionMismatchError
from modules.experiments import random_loop
from modules.loop_space import action, cyclic_shift, loop_measure, straight_loop
from modules.measure_bridge import (
    GridMeasure,
    action_consistency,
    cell_centers,
    cell_index,
    consistency_bound,
    factor_functional,
    loop_pushforward,
    minimizer_transfer,
    pairing,
    pool_argmin_count,
    pushforward,
    read_grid_csv,
    separation_test,
    write_grid_csv,
)
from modules.metric_core import ConformalFactor, bump_factor, euclidean, randers_constant


def _wavy_loop(seed=0, winding=(1, 1)):
    return random_loop(np.random.default_rng(seed), winding, 64)


# ============================================================================
# GRID LAYOUT
# ============================================================================

def test_cell_centers_are_row_major():
    centers = cell_centers(8)
    assert centers.shape == (64, 2)
    assert np.allclose(centers[0], [1 / 16, 1 / 16])
    assert np.allclose(centers[1], [3 / 16, 1 / 16])
    assert np.allclose(centers[8], [1 / 16, 3 / 16])


def test_cell_index_wraps_points():
    iy, ix = cell_index(np.array([[0.25, 0.75], [1.25, -0.25]]), 10)
    assert list(iy) == [7, 7]
    assert list(ix) == [2, 2]


@pytest.mark.parametrize("weights", [np.ones((3, 4)), -np.ones((4, 4)), np.full((4, 4), np.inf)])
def test_grid_measure_validation(weights):
    with pytest.raises(InputDomainError):
        GridMeasure(weights)


# ============================================================================
# PUSHFORWARD & PAIRING
# ============================================================================

@pytest.mark.parametrize("seed", range(4))
def test_pushforward_mass_is_the_action(wavy_conformal, seed):
    loop = _wavy_loop(seed)
    grid = loop_pushforward(wavy_conformal, loop, 32)
    a = action(wavy_conformal, loop)
    assert grid.total_mass == pytest.approx(a, abs=1e-12 * max(1.0, a))


def test_unit_factor_pairs_to_the_action(randers_half):
    loop = _wavy_loop(1, (2, -1))
    assert action_consistency(randers_half, ConformalFactor.constant(1.0), loop, 16) <= 1e-12


@pytest.mark.parametrize("kappa", [0.25, 2.0, 9.0])
def test_constant_factor_pairs_exactly(flat, kappa):
    loop = _wavy_loop(2)
    a = action(flat, loop)
    assert action_consistency(flat, ConformalFactor.constant(kappa), loop, 16) <= 1e-12 * max(1.0, kappa * a)


def test_pairing_is_bilinear(flat):
    first = loop_pushforward(flat, _wavy_loop(3), 16)
    second = loop_pushforward(flat, _wavy_loop(4), 16)
    f = bump_factor(0.3)
    g = ConformalFactor.from_modes({(1, 1): (0.1, 0.2)}, constant_offset=0.5, positive=False)
    combined = first.combine(second, 0.3)
    assert pairing(f, combined) == pytest.approx(0.3 * pairing(f, first) + 0.7 * pairing(f, second), rel=1e-12)
    assert pairing(f + g, first) == pytest.approx(pairing(f, first) + pairing(g, first), rel=1e-12)
    assert pairing(f * 2.5, first) == pytest.approx(2.5 * pairing(f, first), rel=1e-12)


def test_factor_vanishing_on_the_loop_pairs_to_zero(flat):
    center = 3.5 / 8
    phase = 2 * np.pi * center
    dip = ConformalFactor.from_modes({(0, 1): (-np.cos(phase), -np.sin(phase))}, constant_offset=1.0, positive=False)
    grid = loop_pushforward(flat, straight_loop((1, 0), 16, (0.0, center)), 8)
    assert pairing(dip, grid) == pytest.approx(0.0, abs=1e-12)
    assert pairing(ConformalFactor.constant(1.0), grid) == pytest.approx(1.0, rel=1e-14)


def test_pairing_is_monotone_in_the_factor(flat):
    grid = loop_pushforward(flat, _wavy_loop(5), 32)
    low, high = bump_factor(0.1), bump_factor(0.1) + ConformalFactor.constant(0.2)
    assert pairing(low, grid) <= pairing(high, grid)


@pytest.mark.parametrize("seed", range(6))
def test_quantization_bound(wavy_conformal, seed):
    loop = _wavy_loop(seed, (1, 2))
    factor = bump_factor(0.4, center=0.1)
    gap = action_consistency(wavy_conformal, factor, loop, 32)
    assert gap <= consistency_bound(factor, loop_pushforward(wavy_conformal, loop, 32)) + 1e-12


def test_pushforward_is_linear_in_the_measure(flat):
    first = loop_measure(flat, straight_loop((1, 0), 16, (0.0, 0.3)), b=3.0)
    second = loop_measure(flat, straight_loop((1, 1), 16), b=3.0)
    mixed = pushforward(flat, first.mix(second, 0.4), 16)
    combined = pushforward(flat, first, 16).combine(pushforward(flat, second, 16), 0.4)
    assert np.allclose(mixed.weights, combined.weights, rtol=1e-14, atol=1e-16)


def test_pushforward_resolution_floor(flat):
    measure = loop_measure(flat, straight_loop((1, 0), 16), b=2.0)
    with pytest.raises(InputDomainError):
        pushforward(flat, measure, 4)


# ============================================================================
# SEPARATION
# ============================================================================

def test_reindexed_loop_has_the_same_pushforward(flat):
    loop = straight_loop((1, 0), 16, (0.0, 0.2))
    verdict = separation_test(loop_pushforward(flat, loop, 16), loop_pushforward(flat, cyclic_shift(loop, 5), 16))
    assert verdict.equal
    assert verdict.witness is None


def test_distinct_heights_are_separated(flat):
    low = loop_pushforward(flat, straight_loop((1, 0), 16, (0.0, 0.2)), 16)
    high = loop_pushforward(flat, straight_loop((1, 0), 16, (0.0, 0.7)), 16)
    verdict = separation_test(low, high)
    assert not verdict.equal
    assert verdict.witness == (3, 0)
    assert verdict.max_difference == pytest.approx(1 / 16)


def test_separation_needs_matching_resolution(flat):
    loop = straight_loop((1, 0), 16)
    with pytest.raises(ResolutionMismatchError):
        separation_test(loop_pushforward(flat, loop, 8), loop_pushforward(flat, loop, 16))


# ============================================================================
# MINIMIZER TRANSFER
# ============================================================================

def _pool(size=8):
    return [straight_loop((1, 0), 32, (0.0, 0.01 + k / size)) for k in range(size)]


@pytest.mark.parametrize("metric", [euclidean(),
                                    randers_constant((0.3, 0.1))])
def test_action_minimizer_minimizes_the_pairing(metric):
    report = minimizer_transfer(metric, bump_factor(0.2), _pool(), 64)
    assert report.passed
    assert report.best_index == 2
    assert int(np.argmin(report.pairings)) == report.best_index
    assert report.strict_violations == 0


def test_cell_quantization_can_flip_the_strict_comparison(flat):
    # 0.2499 lands in the cell centred at 0.1875, 0.29 in the one centred at 0.3125
    pool = [straight_loop((1, 0), 32, (0.0, 0.2499)), straight_loop((1, 0), 32, (0.0, 0.29))]
    report = minimizer_transfer(flat, bump_factor(0.2, center=0.26), pool, 8)
    assert report.best_index == 0
    assert report.pairings[1] < report.pairings[0]
    assert report.strict_violations == 1
    assert report.violations == 0
    assert report.passed


def test_pool_functional_has_a_single_minimizer(flat):
    assert pool_argmin_count(flat, bump_factor(0.2), _pool(), 64) == 1
    assert pool_argmin_count(flat, ConformalFactor.constant(1.0), _pool(), 64) == 8


def test_factor_functional_matches_grid(flat):
    grid = loop_pushforward(flat, _pool()[3], 16)
    f = factor_functional(bump_factor(0.2), 16)
    assert f(grid.weights.ravel()) == pytest.approx(pairing(bump_factor(0.2), grid), rel=1e-14)


def test_transfer_needs_a_pool(flat):
    with pytest.raises(InputDomainError):
        minimizer_transfer(flat, bump_factor(0.2), [], 16)


# ============================================================================
# CSV
# ============================================================================

def test_grid_csv_file(flat, tmp_path):
    grid = loop_pushforward(flat, _wavy_loop(7), 16)
    loaded = read_grid_csv(write_grid_csv(grid, tmp_path / "grids" / "g.csv"))
    assert np.array_equal(loaded.weights, grid.weights)


def test_short_grid_csv_is_rejected(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("# resolution,8,total_mass,1.0\n0.0,0.0\n")
    with pytest.raises(ReportFormatError):
        read_grid_csv(path)
