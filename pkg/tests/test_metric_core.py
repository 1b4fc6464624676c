import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modules.errors import InputDomainError, InvalidMetricError, NotAConformalFactorError
from modules.metric_core import (
    ConformalFactor,
    ReferenceMetric,
    bump_factor,
    comparison_constant,
    conformal_scale,
    cosine_squared_factor,
    euclidean,
    evaluate,
    randers_constant,
    reversibility_defect,
    riemannian_constant,
    seminorm_distance,
    verify_convexity,
)

coordinates = st.floats(min_value=-3, max_value=3, allow_nan=False, allow_infinity=False)
scales = st.floats(min_value=1e-3, max_value=10, allow_nan=False, allow_infinity=False)
angles = st.floats(min_value=0, max_value=2 * np.pi, allow_nan=False, allow_infinity=False)


def _metrics():
    factor = ConformalFactor.from_modes({(0, 1): (0.2, 0.0), (1, 1): (0.05, -0.03)}, constant_offset=1.0)
    return [
        euclidean(),
        riemannian_constant(2.0, 0.3, 1.0),
        randers_constant((0.5, 0.0)),
        randers_constant((0.2, -0.3), riemannian_constant(1.5, 0.1, 1.2)),
        conformal_scale(euclidean(), factor),
        conformal_scale(randers_constant((0.3, 0.1)), bump_factor(0.4)),
    ]


# ============================================================================
# EVALUATE
# ============================================================================

def test_euclidean_speed():
    assert evaluate(euclidean(), (0.3, 0.1), (3.0, 4.0)) == pytest.approx(5.0, rel=1e-15)


@pytest.mark.parametrize("v, expected", [((1.0, 0.0), 1.5), ((-1.0, 0.0), 0.5)])
def test_randers_is_not_reversible(randers_half, v, expected):
    assert evaluate(randers_half, (0.7, 0.2), v) == pytest.approx(expected, rel=1e-15)


def test_zero_vector_has_zero_speed(wavy_conformal):
    assert evaluate(wavy_conformal, (0.1, 0.9), (0.0, 0.0)) == 0.0


@pytest.mark.parametrize("x, v", [((np.nan, 0.0), (1.0, 0.0)), ((0.0, 0.0), (np.inf, 1.0)), ((0.0, 0.0, 0.0), (1.0, 0.0))])
def test_evaluate_rejects_bad_inputs(flat, x, v):
    with pytest.raises(InputDomainError):
        evaluate(flat, x, v)


@settings(max_examples=200, deadline=None)
@given(coordinates, coordinates, angles, scales, st.integers(min_value=0, max_value=5))
def test_positive_homogeneity(x, y, theta, a, which):
    metric = _metrics()[which]
    v = np.array([np.cos(theta), np.sin(theta)])
    base = evaluate(metric, (x, y), v)
    assert base > 0
    assert evaluate(metric, (x, y), a * v) == pytest.approx(a * base, rel=1e-10)


# ============================================================================
# CONSTRUCTION CHECKS
# ============================================================================

def test_randers_one_form_too_large_is_rejected():
    with pytest.raises(InvalidMetricError):
        randers_constant((1.2, 0.0))


def test_unchecked_oversized_randers_goes_negative():
    metric = randers_constant((1.2, 0.0), check=False)
    assert evaluate(metric, (0.0, 0.0), (-1.0, 0.0)) < 0


def test_riemannian_must_be_positive_definite():
    with pytest.raises(InvalidMetricError):
        riemannian_constant(1.0, 2.0, 1.0)


def test_conformal_factor_positivity():
    with pytest.raises(NotAConformalFactorError):
        ConformalFactor.from_modes({(0, 1): (1.5, 0.0)}, constant_offset=1.0)
    element = ConformalFactor.from_modes({(0, 1): (1.5, 0.0)}, constant_offset=1.0, positive=False)
    with pytest.raises(NotAConformalFactorError):
        conformal_scale(euclidean(), element)


# ============================================================================
# CONVEXITY & COMPARISON
# ============================================================================

def test_euclidean_hessian_is_twice_identity(flat):
    report = verify_convexity(flat, sample_count=200, seed=3)
    assert report.passed
    assert report.min_eigenvalue == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("which", range(6))
def test_sampled_metrics_are_strictly_convex(which):
    assert verify_convexity(_metrics()[which], sample_count=500, seed=which).passed


@pytest.mark.parametrize("metric, expected", [
    (euclidean(), 1.0),
    (conformal_scale(euclidean(), ConformalFactor.constant(4.0)), 2.0),
    (randers_constant((0.5, 0.0)), 2.0),
])
def test_comparison_constant_examples(metric, expected):
    assert comparison_constant(metric, safety=1.0) == pytest.approx(expected, rel=1e-12)


def test_comparison_constant_carries_safety_factor(flat):
    assert comparison_constant(flat) == pytest.approx(1.01, rel=1e-12)


@pytest.mark.parametrize("which", range(6))
def test_sandwich_on_fresh_samples(which):
    metric = _metrics()[which]
    c = comparison_constant(metric)
    rng = np.random.default_rng(1000 + which)
    x = rng.random((10_000, 2))
    theta = rng.uniform(0, 2 * np.pi, 10_000)
    v = np.column_stack([np.cos(theta), np.sin(theta)])
    speed = metric(x, v)
    norm = ReferenceMetric().norm(v)
    assert np.all(speed / c <= norm * (1 + 1e-12))
    assert np.all(norm <= c * speed * (1 + 1e-12))


def test_degenerate_metric_has_no_comparison_constant():
    metric = randers_constant((1.0, 0.0), check=False)
    with pytest.raises(InvalidMetricError):
        comparison_constant(metric)


# ============================================================================
# CONFORMAL SCALING
# ============================================================================

def test_constant_factors_scale_speed(flat):
    x = np.random.default_rng(0).random((50, 2))
    v = np.random.default_rng(1).standard_normal((50, 2))
    assert np.allclose(conformal_scale(flat, ConformalFactor.constant(1.0))(x, v), flat(x, v), rtol=1e-15)
    assert np.allclose(conformal_scale(flat, ConformalFactor.constant(4.0))(x, v), 2 * flat(x, v), rtol=1e-15)


def test_cosine_factor_at_origin(flat):
    factor = ConformalFactor.from_modes({(0, 1): (0.2, 0.0)}, constant_offset=1.0)
    assert evaluate(conformal_scale(flat, factor), (0.0, 0.0), (1.0, 0.0)) == pytest.approx(np.sqrt(1.2), rel=1e-14)


def test_conformal_composition_matches_product(randers_half):
    first = ConformalFactor.from_modes({(0, 1): (0.2, 0.1), (1, 0): (0.0, 0.1)}, constant_offset=1.0)
    second = ConformalFactor.from_modes({(1, 1): (0.3, 0.0), (0, 2): (0.05, 0.05)}, constant_offset=1.5)
    nested = conformal_scale(conformal_scale(randers_half, first), second)
    direct = conformal_scale(randers_half, first * second)
    rng = np.random.default_rng(7)
    x, v = rng.random((500, 2)), rng.standard_normal((500, 2))
    assert np.allclose(nested(x, v), direct(x, v), rtol=1e-12, atol=0)


def test_uniqueness_factors_have_expected_troughs():
    ys = np.arange(1000) / 1000
    points = np.column_stack([np.zeros_like(ys), ys])
    assert ys[np.argmin(bump_factor(0.2)(points))] == pytest.approx(0.25)
    troughs = ys[np.isclose(cosine_squared_factor(0.5)(points), 1.0, atol=1e-12)]
    assert set(np.round(troughs, 3)) == {0.25, 0.75}


def test_factor_derivatives_are_exact():
    factor = ConformalFactor.from_modes({(1, 2): (0.3, -0.2)}, constant_offset=2.0)
    x = np.array([[0.13, 0.71]])
    phase = 2 * np.pi * (0.13 + 2 * 0.71)
    expected = -(2 * np.pi) ** 2 * 2 * (0.3 * np.cos(phase) - 0.2 * np.sin(phase))
    assert factor.partial(x, (1, 1))[0] == pytest.approx(expected, rel=1e-12)
    _, grad = factor.jet(x)
    assert grad[0, 1] == pytest.approx(factor.partial(x, (0, 1))[0], rel=1e-12)


# ============================================================================
# SEMINORM DISTANCE
# ============================================================================

def _random_factor(seed):
    rng = np.random.default_rng(seed)
    modes = {(int(kx), int(ky)): tuple(rng.uniform(-0.2, 0.2, 2)) for kx, ky in rng.integers(0, 3, size=(3, 2))}
    return ConformalFactor.from_modes(modes, constant_offset=rng.uniform(-1, 1), positive=False)


def test_seminorm_identity():
    f = _random_factor(1)
    assert seminorm_distance(f, f) == 0.0


def test_seminorm_is_bounded_by_two():
    assert seminorm_distance(_random_factor(1), _random_factor(2), k_max=40) < 2.0


def test_seminorm_constant_difference_closed_form():
    f = _random_factor(3)
    delta = 0.7
    g = f + ConformalFactor.constant(-delta, positive=False)
    expected = sum(2.0 ** (-k) for k in range(9)) * delta / (1 + delta)
    assert seminorm_distance(f, g) == pytest.approx(expected, rel=1e-12)


def test_seminorm_rejects_negative_order():
    with pytest.raises(InputDomainError):
        seminorm_distance(_random_factor(1), _random_factor(2), k_max=-1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 10_000))
def test_seminorm_is_a_metric(a, b, c):
    f, g, h = _random_factor(a), _random_factor(b), _random_factor(c)
    d_fg, d_gf = seminorm_distance(f, g), seminorm_distance(g, f)
    assert d_fg >= 0
    assert d_fg == pytest.approx(d_gf, abs=1e-12)
    assert seminorm_distance(f, h) <= d_fg + seminorm_distance(g, h) + 1e-12


# ============================================================================
# REVERSIBILITY
# ============================================================================

def test_reversibility_defect_by_variant(flat, randers_half):
    assert reversibility_defect(flat) == pytest.approx(0.0, abs=1e-15)
    assert reversibility_defect(riemannian_constant(2.0, 0.3, 1.0)) == pytest.approx(0.0, abs=1e-14)
    assert reversibility_defect(randers_half) == pytest.approx(1.0, abs=1e-3)
    scaled = conformal_scale(flat, bump_factor(0.3))
    assert reversibility_defect(scaled) == pytest.approx(0.0, abs=1e-14)
