import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modules import loop_space
from modules.errors import DegenerateLoopError, InputDomainError, MalformedLoopError, SpeedCapError, TrivialClassError
from modules.loop_space import (
    DiscreteLoop,
    LoopMeasure,
    action,
    cs_gap,
    cyclic_shift,
    is_constant_speed,
    length,
    loop_measure,
    mean_position,
    measure_action,
    read_loop_csv,
    refine_loop,
    reparametrize_constant_speed,
    require_nontrivial,
    straight_loop,
    winding_class,
    write_loop_csv,
)
from modules.experiments import random_loop, random_metric, METRIC_FAMILIES
from modules.metric_core import ConformalFactor, conformal_scale

CLASSES = [(1, 0), (0, 1), (1, 1), (2, 1), (-1, 2), (3, 4)]


# ============================================================================
# LOOPS & WINDING
# ============================================================================

def test_winding_of_straight_lifts():
    assert winding_class(straight_loop((1, 0), 8)) == (1, 0)
    lift = np.linspace([0.3, 0.7], [2.3, 1.7], 9)
    assert winding_class(DiscreteLoop.from_lift(lift)) == (2, 1)


def test_constant_loop_is_trivial():
    loop = DiscreteLoop.from_lift(np.tile([0.2, 0.2], (9, 1)))
    assert winding_class(loop) == (0, 0)
    with pytest.raises(TrivialClassError):
        require_nontrivial(winding_class(loop))


def test_lift_must_close_up():
    lift = np.linspace([0.0, 0.0], [1.0, 0.5], 9)
    with pytest.raises(MalformedLoopError):
        DiscreteLoop.from_lift(lift)


@pytest.mark.parametrize("vertices, winding", [
    (np.zeros((7, 2)), (1, 0)),
    (np.zeros((8, 3)), (1, 0)),
    (np.full((8, 2), np.nan), (1, 0)),
    (np.zeros((8, 2)), (0.5, 0)),
])
def test_malformed_loops(vertices, winding):
    with pytest.raises(MalformedLoopError):
        DiscreteLoop(vertices, winding)


# ============================================================================
# LENGTH, ACTION, CAUCHY-SCHWARZ
# ============================================================================

@pytest.mark.parametrize("winding, expected", [((1, 0), 1.0), ((3, 4), 5.0)])
def test_flat_straight_length(flat, winding, expected):
    assert length(flat, straight_loop(winding, 32)) == pytest.approx(expected, rel=1e-14)


def test_randers_length_depends_on_direction(randers_half):
    forward = straight_loop((1, 0), 16)
    backward = DiscreteLoop(forward.vertices[::-1].copy(), (-1, 0))
    assert length(randers_half, forward) == pytest.approx(1.5, rel=1e-14)
    assert length(randers_half, backward) == pytest.approx(0.5, rel=1e-14)


@pytest.mark.parametrize("n", [8, 17, 128])
def test_flat_straight_action_is_one(flat, n):
    assert action(flat, straight_loop((1, 0), n)) == pytest.approx(1.0, rel=1e-14)


def test_two_speed_loop(flat, two_speed_loop):
    assert action(flat, two_speed_loop) == pytest.approx(5.0, rel=1e-14)
    assert length(flat, two_speed_loop) == pytest.approx(2.0, rel=1e-14)
    assert cs_gap(flat, two_speed_loop) == pytest.approx(1.0, rel=1e-13)
    assert not is_constant_speed(flat, two_speed_loop)


def test_constant_speed_gap_vanishes(flat):
    assert abs(cs_gap(flat, straight_loop((2, 1), 64))) <= 1e-12


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_cs_gap_is_nonnegative(seed):
    rng = np.random.default_rng(seed)
    metric = random_metric(rng, METRIC_FAMILIES[seed % len(METRIC_FAMILIES)])
    loop = random_loop(rng, CLASSES[seed % len(CLASSES)], 32)
    assert cs_gap(metric, loop) >= -1e-9


def test_cyclic_reindexing_keeps_length_and_action(wavy_conformal):
    loop = random_loop(np.random.default_rng(5), (1, 2), 40)
    shifted = cyclic_shift(loop, 13)
    assert winding_class(shifted) == (1, 2)
    assert length(wavy_conformal, shifted) == pytest.approx(length(wavy_conformal, loop), rel=1e-12)
    assert action(wavy_conformal, shifted) == pytest.approx(action(wavy_conformal, loop), rel=1e-12)


def test_constant_factor_scales_length(randers_half):
    loop = random_loop(np.random.default_rng(9), (2, -1), 32)
    scaled = conformal_scale(randers_half, ConformalFactor.constant(2.25))
    assert length(scaled, loop) == pytest.approx(1.5 * length(randers_half, loop), rel=1e-14)


def test_refined_straight_loop_keeps_length(flat):
    loop = straight_loop((1, 1), 16)
    refined = refine_loop(loop)
    assert refined.n_vertices == 32
    assert length(flat, refined) == pytest.approx(length(flat, loop), rel=1e-14)


def test_mean_position_of_horizontal_line():
    _, y = mean_position(straight_loop((1, 0), 64, (0.0, 0.3)))
    assert y == pytest.approx(0.3, abs=1e-12)


# ============================================================================
# CONSTANT-SPEED REPARAMETRIZATION
# ============================================================================

def test_reparametrize_two_speed_loop(flat, two_speed_loop):
    resampled = reparametrize_constant_speed(flat, two_speed_loop)
    assert winding_class(resampled) == (2, 0)
    assert cs_gap(flat, resampled) <= 1e-6 * action(flat, resampled)
    assert length(flat, resampled) == pytest.approx(2.0, rel=1e-9)
    assert np.allclose(resampled.vertices[:, 1], 0.4)


def test_reparametrize_is_idempotent(flat, randers_half):
    loop = straight_loop((3, 4), 32, (0.1, 0.2))
    for metric in (flat, randers_half):
        assert np.allclose(reparametrize_constant_speed(metric, loop).vertices, loop.vertices, atol=1e-9)
    once = reparametrize_constant_speed(flat, random_loop(np.random.default_rng(2), (1, 1), 48))
    twice = reparametrize_constant_speed(flat, once)
    assert np.allclose(once.vertices, twice.vertices, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_reparametrization_reaches_constant_speed(seed):
    rng = np.random.default_rng(seed)
    metric = random_metric(rng, METRIC_FAMILIES[seed % len(METRIC_FAMILIES)])
    winding = CLASSES[seed % len(CLASSES)]
    resampled = reparametrize_constant_speed(metric, random_loop(rng, winding, 32))
    assert winding_class(resampled) == winding
    assert cs_gap(metric, resampled) <= 1e-6 * action(metric, resampled)


@pytest.mark.parametrize("seed", range(12))
def test_reparametrization_needs_few_passes(monkeypatch, seed):
    monkeypatch.setattr(loop_space, "RESAMPLE_MAX_ITERS", 8)
    rng = np.random.default_rng([seed, 1])
    metric = random_metric(rng, METRIC_FAMILIES[seed % len(METRIC_FAMILIES)])
    resampled = reparametrize_constant_speed(metric, random_loop(rng, CLASSES[seed % len(CLASSES)], 64))
    assert cs_gap(metric, resampled) <= 1e-6 * action(metric, resampled)


def test_zero_length_loop_cannot_be_reparametrized(flat):
    loop = DiscreteLoop(np.zeros((8, 2)), (0, 0))
    with pytest.raises(DegenerateLoopError):
        reparametrize_constant_speed(flat, loop)


# ============================================================================
# LOOP MEASURES
# ============================================================================

def test_loop_measure_samples(flat):
    measure = loop_measure(flat, straight_loop((1, 0), 16), b=2.0)
    assert np.allclose(measure.velocities, [1.0, 0.0])
    assert np.allclose(measure.weights, 1 / 16)
    assert measure.integrate(lambda x, v: np.ones(len(x))) == pytest.approx(1.0, rel=1e-15)


def test_loop_measure_speed_cap(flat):
    with pytest.raises(SpeedCapError):
        loop_measure(flat, straight_loop((1, 0), 16), b=0.5)


def test_measure_action_matches_loop_action(wavy_conformal):
    loop = random_loop(np.random.default_rng(4), (2, 1), 64)
    measure = loop_measure(wavy_conformal, loop, b=10.0)
    assert measure_action(wavy_conformal, measure) == pytest.approx(action(wavy_conformal, loop), rel=1e-12)


def test_measure_mixing(flat):
    first = loop_measure(flat, straight_loop((1, 0), 8), b=3.0)
    second = loop_measure(flat, straight_loop((0, 2), 8), b=3.0)
    mixed = first.mix(second, 0.25)
    assert mixed.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert measure_action(flat, mixed) == pytest.approx(0.25 * 1.0 + 0.75 * 4.0, rel=1e-14)
    with pytest.raises(InputDomainError):
        first.mix(second, 1.5)


def test_measure_weights_must_be_probability():
    with pytest.raises(InputDomainError):
        LoopMeasure(np.zeros((2, 2)), np.ones((2, 2)) * 0.1, [0.7, 0.7], speed_cap=1.0)


# ============================================================================
# CSV
# ============================================================================

def test_loop_csv_file(tmp_path):
    loop = random_loop(np.random.default_rng(3), (-1, 2), 24)
    path = write_loop_csv(loop, tmp_path / "loops" / "c.csv")
    loaded = read_loop_csv(path)
    assert loaded.winding == (-1, 2)
    assert np.array_equal(loaded.vertices, loop.vertices)


def test_truncated_loop_csv_is_rejected(tmp_path):
    path = write_loop_csv(straight_loop((1, 0), 8), tmp_path / "c.csv")
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-2]) + "\n")
    with pytest.raises(MalformedLoopError):
        read_loop_csv(path)
