"""
Finsler metrics on the flat torus T^2 = R^2 / Z^2.

Coefficient fields are truncated Fourier series (ConformalFactor), so every
derivative used by the solver and by the C^k seminorms is exact.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from modules.errors import InputDomainError, InvalidMetricError, NotAConformalFactorError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
VERIFY_RESOLUTION = 64
HESSIAN_STEP = 1e-4
COMPARISON_SAFETY = 1.01
DEFAULT_K_MAX = 8


def torus_grid(resolution: int) -> np.ndarray:
    """Points i/r, j/r of the torus as an (r*r, 2) array, x varying fastest."""
    ticks = np.arange(resolution) / resolution
    xx, yy = np.meshgrid(ticks, ticks)
    return np.column_stack([xx.ravel(), yy.ravel()])


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.shape[-1] != 2:
        raise InputDomainError(f"Expected points with last axis 2, got shape {arr.shape}")
    return arr


# ============================================================================
# CONFORMAL FACTORS (elements of E and E+)
# ============================================================================

@dataclass(frozen=True, eq=False)
class ConformalFactor:
    """
    Truncated Fourier series on T^2:

        lambda(x) = c0 + sum_k a_k cos(2 pi k.x) + b_k sin(2 pi k.x)

    With ``positive=True`` the factor must lie in E+ (checked on a dense grid);
    with ``positive=False`` it is a plain element of E.
    """
    modes: np.ndarray
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    constant_offset: float = 0.0
    positive: bool = True

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=int).reshape(-1, 2)
        cos_coeffs = np.asarray(self.cos_coeffs, dtype=float).reshape(-1)
        sin_coeffs = np.asarray(self.sin_coeffs, dtype=float).reshape(-1)
        if not (len(modes) == len(cos_coeffs) == len(sin_coeffs)):
            raise InputDomainError("Fourier modes and coefficient arrays differ in length")
        if not (np.all(np.isfinite(cos_coeffs)) and np.all(np.isfinite(sin_coeffs))
                and np.isfinite(self.constant_offset)):
            raise InputDomainError("Fourier coefficients must be finite")
        for name, arr in (("modes", modes), ("cos_coeffs", cos_coeffs), ("sin_coeffs", sin_coeffs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "constant_offset", float(self.constant_offset))
        if self.positive:
            lowest = self.min_value()
            if lowest <= 0.0:
                raise NotAConformalFactorError(
                    f"Conformal factor is not positive: min over the verification grid is {lowest:.6g}"
                )

    @classmethod
    def from_modes(cls, coefficients: Mapping[Tuple[int, int], Tuple[float, float]],
                   constant_offset: float = 0.0, positive: bool = True) -> "ConformalFactor":
        modes = list(coefficients.keys())
        pairs = [coefficients[m] for m in modes]
        return cls(
            modes=np.array(modes, dtype=int).reshape(-1, 2),
            cos_coeffs=np.array([p[0] for p in pairs], dtype=float),
            sin_coeffs=np.array([p[1] for p in pairs], dtype=float),
            constant_offset=constant_offset,
            positive=positive,
        )

    @classmethod
    def constant(cls, value: float, positive: bool = True) -> "ConformalFactor":
        return cls(np.zeros((0, 2), dtype=int), np.zeros(0), np.zeros(0), value, positive)

    @property
    def max_mode(self) -> int:
        return int(np.abs(self.modes).max()) if len(self.modes) else 0

    def _verify_resolution(self) -> int:
        return max(VERIFY_RESOLUTION, 8 * self.max_mode + 1)

    def _trig(self, points: np.ndarray):
        phase = TWO_PI * points @ self.modes.T
        return np.cos(phase), np.sin(phase)

    def __call__(self, points) -> np.ndarray:
        pts = _as_points(points)
        flat = pts.reshape(-1, 2)
        cos_p, sin_p = self._trig(flat)
        values = self.constant_offset + cos_p @ self.cos_coeffs + sin_p @ self.sin_coeffs
        return values.reshape(pts.shape[:-1])

    def jet(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Values and exact gradients at ``points``."""
        pts = _as_points(points)
        flat = pts.reshape(-1, 2)
        cos_p, sin_p = self._trig(flat)
        values = self.constant_offset + cos_p @ self.cos_coeffs + sin_p @ self.sin_coeffs
        # d/dx_j [a cos + b sin] = 2 pi k_j (-a sin + b cos)
        wave = -sin_p * self.cos_coeffs + cos_p * self.sin_coeffs
        grad = TWO_PI * wave @ self.modes.astype(float)
        return values.reshape(pts.shape[:-1]), grad.reshape(pts.shape)

    def partial(self, points, order: Tuple[int, int]) -> np.ndarray:
        """Exact mixed partial derivative of multi-index ``order``."""
        pts = _as_points(points)
        flat = pts.reshape(-1, 2)
        n = int(order[0]) + int(order[1])
        cos_p, sin_p = self._trig(flat)
        # cos/sin of (theta + n pi / 2)
        shifted = {
            0: (cos_p, sin_p),
            1: (-sin_p, cos_p),
            2: (-cos_p, -sin_p),
            3: (sin_p, -cos_p),
        }[n % 4]
        weights = (TWO_PI ** n) * (self.modes[:, 0].astype(float) ** order[0]) \
            * (self.modes[:, 1].astype(float) ** order[1])
        values = shifted[0] @ (weights * self.cos_coeffs) + shifted[1] @ (weights * self.sin_coeffs)
        if n == 0:
            values = values + self.constant_offset
        return values.reshape(pts.shape[:-1])

    def ck_norm(self, k: int, resolution: Optional[int] = None) -> float:
        """Max over a dense grid of all partial derivatives of order <= k."""
        grid = torus_grid(resolution or self._verify_resolution())
        best = 0.0
        for n in range(k + 1):
            for a in range(n + 1):
                best = max(best, float(np.max(np.abs(self.partial(grid, (a, n - a))))))
        return best

    def min_value(self, resolution: Optional[int] = None) -> float:
        return float(np.min(self(torus_grid(resolution or self._verify_resolution()))))

    def is_positive(self, resolution: Optional[int] = None) -> bool:
        return self.min_value(resolution) > 0.0

    def lipschitz_constant(self, resolution: Optional[int] = None) -> float:
        _, grad = self.jet(torus_grid(resolution or self._verify_resolution()))
        return float(np.max(np.linalg.norm(grad, axis=-1)))

    # Arithmetic results are plain elements of E; positivity is re-checked by consumers.
    def as_element(self) -> "ConformalFactor":
        return ConformalFactor(self.modes, self.cos_coeffs, self.sin_coeffs, self.constant_offset, False)

    def as_positive(self) -> "ConformalFactor":
        return ConformalFactor(self.modes, self.cos_coeffs, self.sin_coeffs, self.constant_offset, True)

    def scaled(self, factor: float) -> "ConformalFactor":
        return ConformalFactor(self.modes, factor * self.cos_coeffs, factor * self.sin_coeffs,
                               factor * self.constant_offset, False)

    def __add__(self, other: "ConformalFactor") -> "ConformalFactor":
        return ConformalFactor(
            np.vstack([self.modes, other.modes]),
            np.concatenate([self.cos_coeffs, other.cos_coeffs]),
            np.concatenate([self.sin_coeffs, other.sin_coeffs]),
            self.constant_offset + other.constant_offset,
            False,
        )

    def __neg__(self) -> "ConformalFactor":
        return self.scaled(-1.0)

    def __sub__(self, other: "ConformalFactor") -> "ConformalFactor":
        return self + (-other)

    def __mul__(self, other) -> "ConformalFactor":
        if np.isscalar(other):
            return self.scaled(float(other))
        # (a cos A + b sin A)(c cos B + d sin B) split into the modes A + B and A - B
        a, b = self.cos_coeffs[:, None], self.sin_coeffs[:, None]
        c, d = other.cos_coeffs[None, :], other.sin_coeffs[None, :]
        plus = (self.modes[:, None, :] + other.modes[None, :, :]).reshape(-1, 2)
        minus = (self.modes[:, None, :] - other.modes[None, :, :]).reshape(-1, 2)
        modes = np.vstack([plus, minus, self.modes, other.modes])
        cos_coeffs = np.concatenate([
            (0.5 * (a * c - b * d)).ravel(),
            (0.5 * (a * c + b * d)).ravel(),
            other.constant_offset * self.cos_coeffs,
            self.constant_offset * other.cos_coeffs,
        ])
        sin_coeffs = np.concatenate([
            (0.5 * (a * d + b * c)).ravel(),
            (0.5 * (b * c - a * d)).ravel(),
            other.constant_offset * self.sin_coeffs,
            self.constant_offset * other.sin_coeffs,
        ])
        return ConformalFactor(modes, cos_coeffs, sin_coeffs,
                               self.constant_offset * other.constant_offset, False).simplified()

    __rmul__ = __mul__

    def coefficient_table(self) -> Dict[Tuple[int, int], Tuple[float, float]]:
        """
        Merged coefficients keyed by canonical mode; k and -k are the same wave
        (cos even, sin odd), the zero mode is folded into the returned offset key.
        """
        table: Dict[Tuple[int, int], Tuple[float, float]] = {}
        for mode, a, b in zip(self.modes, self.cos_coeffs, self.sin_coeffs):
            kx, ky = int(mode[0]), int(mode[1])
            if kx < 0 or (kx == 0 and ky < 0):
                kx, ky, b = -kx, -ky, -b
            if kx == 0 and ky == 0:
                b = 0.0
            prev = table.get((kx, ky), (0.0, 0.0))
            table[(kx, ky)] = (prev[0] + float(a), prev[1] + float(b))
        return table

    def simplified(self) -> "ConformalFactor":
        """Same function with duplicate modes merged and the zero mode moved into the offset."""
        table = self.coefficient_table()
        offset = self.constant_offset + table.pop((0, 0), (0.0, 0.0))[0]
        table = {k: ab for k, ab in table.items() if ab != (0.0, 0.0)}
        return ConformalFactor.from_modes(table, constant_offset=offset, positive=False)


def cosine_squared_factor(amplitude: float, shift: float = 0.0) -> ConformalFactor:
    """lambda(y) = 1 + amplitude * cos^2(2 pi (y - shift)); troughs at shift +- 1/4 (period 1/2)."""
    half = 0.5 * amplitude
    return ConformalFactor.from_modes(
        {(0, 2): (half * np.cos(2 * TWO_PI * shift), half * np.sin(2 * TWO_PI * shift))},
        constant_offset=1.0 + half,
    )


def bump_factor(amplitude: float, center: float = 0.25) -> ConformalFactor:
    """lambda(y) = 1 + amplitude * sin^2(pi (y - center)); single trough at y = center."""
    half = 0.5 * amplitude
    return ConformalFactor.from_modes(
        {(0, 1): (-half * np.cos(TWO_PI * center), -half * np.sin(TWO_PI * center))},
        constant_offset=1.0 + half,
    )


# ============================================================================
# REFERENCE METRIC
# ============================================================================

@dataclass(frozen=True)
class ReferenceMetric:
    """The fixed flat metric g; |v| is the Euclidean norm."""

    def norm(self, v) -> np.ndarray:
        return np.linalg.norm(np.asarray(v, dtype=float), axis=-1)

    def class_length(self, winding: Tuple[int, int]) -> float:
        """g-length of the straight loop in class (p, q)."""
        return float(np.hypot(winding[0], winding[1]))


# ============================================================================
# FINSLER METRICS
# ============================================================================

class FinslerMetric(ABC):
    """
    Vectorized evaluator F(x, v) on T^2 x R^2. ``x`` and ``v`` are arrays of
    shape (..., 2) with equal leading shape.
    """
    variant: str = "abstract"

    @abstractmethod
    def jet(self, x: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return F, dF/dx and dF/dv."""

    def __call__(self, x, v) -> np.ndarray:
        return self.jet(np.asarray(x, dtype=float), np.asarray(v, dtype=float))[0]

    def describe(self) -> Dict:
        return {"variant": self.variant}


def _safe_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    mask = den > 0
    np.divide(num, den, out=out, where=mask)
    return out


class RiemannianMetric(FinslerMetric):
    """F(x, v) = sqrt(v^T G(x) v) with a symmetric positive-definite field G."""
    variant = "riemannian"

    def __init__(self, g11: ConformalFactor, g12: ConformalFactor, g22: ConformalFactor,
                 check: bool = True):
        self.g11 = g11.as_element()
        self.g12 = g12.as_element()
        self.g22 = g22.as_element()
        if check:
            grid = torus_grid(VERIFY_RESOLUTION)
            a, b, c = self.g11(grid), self.g12(grid), self.g22(grid)
            det = a * c - b * b
            if np.min(a) <= 0.0 or np.min(det) <= 0.0:
                raise InvalidMetricError(
                    f"Riemannian coefficients are not positive definite (min g11={np.min(a):.4g}, min det={np.min(det):.4g})"
                )

    def coefficients(self, x: np.ndarray):
        flat = x.reshape(-1, 2)
        (a, da), (b, db), (c, dc) = self.g11.jet(flat), self.g12.jet(flat), self.g22.jet(flat)
        return (a, b, c), (da, db, dc)

    def jet(self, x, v):
        shape = v.shape
        flat_v = v.reshape(-1, 2)
        (a, b, c), (da, db, dc) = self.coefficients(x)
        vx, vy = flat_v[:, 0], flat_v[:, 1]
        quad = a * vx * vx + 2.0 * b * vx * vy + c * vy * vy
        value = np.sqrt(np.maximum(quad, 0.0))
        dquad_dx = (da * (vx * vx)[:, None] + 2.0 * db * (vx * vy)[:, None] + dc * (vy * vy)[:, None])
        gv = np.column_stack([a * vx + b * vy, b * vx + c * vy])
        dF_dx = _safe_divide(dquad_dx, 2.0 * value[:, None] * np.ones((1, 2)))
        dF_dv = _safe_divide(gv, value[:, None] * np.ones((1, 2)))
        return value.reshape(shape[:-1]), dF_dx.reshape(shape), dF_dv.reshape(shape)

    def dual_norm(self, x: np.ndarray, covector: np.ndarray) -> np.ndarray:
        """sqrt(beta^T G^{-1} beta), the norm of a one-form."""
        (a, b, c), _ = self.coefficients(x)
        bx, by = covector.reshape(-1, 2)[:, 0], covector.reshape(-1, 2)[:, 1]
        det = a * c - b * b
        return np.sqrt((c * bx * bx - 2.0 * b * bx * by + a * by * by) / det)

    def describe(self) -> Dict:
        return {
            "variant": self.variant,
            "g11": _table_repr(self.g11),
            "g12": _table_repr(self.g12),
            "g22": _table_repr(self.g22),
        }


class RandersMetric(FinslerMetric):
    """F(x, v) = |v|_G + beta_x(x) v_x + beta_y(x) v_y, with |beta|_G < 1 everywhere."""
    variant = "randers"

    def __init__(self, riemannian: RiemannianMetric, beta_x: ConformalFactor, beta_y: ConformalFactor,
                 check: bool = True):
        self.riemannian = riemannian
        self.beta_x = beta_x.as_element()
        self.beta_y = beta_y.as_element()
        if check:
            grid = torus_grid(VERIFY_RESOLUTION)
            beta = np.column_stack([self.beta_x(grid), self.beta_y(grid)])
            sup = float(np.max(riemannian.dual_norm(grid, beta)))
            if sup >= 1.0:
                raise InvalidMetricError(f"Randers one-form too large: sup |beta| = {sup:.6g} >= 1")

    def jet(self, x, v):
        shape = v.shape
        flat_x, flat_v = x.reshape(-1, 2), v.reshape(-1, 2)
        r_val, r_dx, r_dv = self.riemannian.jet(flat_x, flat_v)
        bx, dbx = self.beta_x.jet(flat_x)
        by, dby = self.beta_y.jet(flat_x)
        value = r_val + bx * flat_v[:, 0] + by * flat_v[:, 1]
        dF_dx = r_dx + dbx * flat_v[:, :1] + dby * flat_v[:, 1:]
        dF_dv = r_dv + np.column_stack([bx, by])
        return value.reshape(shape[:-1]), dF_dx.reshape(shape), dF_dv.reshape(shape)

    def describe(self) -> Dict:
        return {
            "variant": self.variant,
            "riemannian": self.riemannian.describe(),
            "beta_x": _table_repr(self.beta_x),
            "beta_y": _table_repr(self.beta_y),
        }


class ConformalMetric(FinslerMetric):
    """F(x, v) = sqrt(lambda(x)) * F_base(x, v)."""
    variant = "conformal"

    def __init__(self, base: FinslerMetric, factor: ConformalFactor, check: bool = True):
        if check and not factor.is_positive():
            raise NotAConformalFactorError(
                f"Conformal factor must be positive (min {factor.min_value():.6g})"
            )
        self.base = base
        self.factor = factor

    def jet(self, x, v):
        shape = v.shape
        flat_x, flat_v = x.reshape(-1, 2), v.reshape(-1, 2)
        b_val, b_dx, b_dv = self.base.jet(flat_x, flat_v)
        lam, dlam = self.factor.jet(flat_x)
        root = np.sqrt(np.maximum(lam, 0.0))
        droot = _safe_divide(dlam, 2.0 * root[:, None] * np.ones((1, 2)))
        value = root * b_val
        dF_dx = droot * b_val[:, None] + root[:, None] * b_dx
        dF_dv = root[:, None] * b_dv
        return value.reshape(shape[:-1]), dF_dx.reshape(shape), dF_dv.reshape(shape)

    def describe(self) -> Dict:
        return {
            "variant": self.variant,
            "base": self.base.describe(),
            "factor": _table_repr(self.factor),
        }


def _table_repr(factor: ConformalFactor) -> Dict:
    return {
        "offset": factor.constant_offset,
        "modes": [[k[0], k[1], a, b] for k, (a, b) in sorted(factor.coefficient_table().items())],
    }


# ============================================================================
# FACTORIES
# ============================================================================

def riemannian_constant(g11: float = 1.0, g12: float = 0.0, g22: float = 1.0) -> RiemannianMetric:
    return RiemannianMetric(
        ConformalFactor.constant(g11, positive=False),
        ConformalFactor.constant(g12, positive=False),
        ConformalFactor.constant(g22, positive=False),
    )


def euclidean() -> RiemannianMetric:
    return riemannian_constant(1.0, 0.0, 1.0)


def randers_constant(beta: Tuple[float, float], base: Optional[RiemannianMetric] = None,
                     check: bool = True) -> RandersMetric:
    return RandersMetric(
        base or euclidean(),
        ConformalFactor.constant(beta[0], positive=False),
        ConformalFactor.constant(beta[1], positive=False),
        check=check,
    )


# ============================================================================
# OPERATIONS
# ============================================================================

def evaluate(metric: FinslerMetric, x, v):
    """F(x, v); scalar in, scalar out."""
    x_arr = np.asarray(x, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    if x_arr.shape[-1:] != (2,) or v_arr.shape != x_arr.shape:
        raise InputDomainError(f"Point and vector must both have shape (..., 2): {x_arr.shape}, {v_arr.shape}")
    if not (np.all(np.isfinite(x_arr)) and np.all(np.isfinite(v_arr))):
        raise InputDomainError("Point and vector must be finite")
    value = metric(x_arr, v_arr)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class ConvexityReport:
    min_eigenvalue: float
    worst_point: Tuple[float, float]
    worst_direction: Tuple[float, float]
    tolerance: float
    passed: bool


def fiber_hessian(metric: FinslerMetric, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Central-difference Hessian of v -> F^2(x, v), step 1e-4 |v|; shape (n, 2, 2)."""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    v = np.asarray(v, dtype=float).reshape(-1, 2)
    h = (HESSIAN_STEP * np.linalg.norm(v, axis=1))[:, None]
    basis = np.eye(2)
    hess = np.empty((len(v), 2, 2))

    def sq(w):
        return metric(x, w) ** 2

    for j in range(2):
        for k in range(j, 2):
            ej, ek = h * basis[j], h * basis[k]
            entry = (sq(v + ej + ek) - sq(v + ej - ek) - sq(v - ej + ek) + sq(v - ej - ek)) / (4.0 * h[:, 0] ** 2)
            hess[:, j, k] = entry
            hess[:, k, j] = entry
    return hess


def verify_convexity(metric: FinslerMetric, sample_count: int, seed: int,
                     tolerance: float = 1e-6) -> ConvexityReport:
    if sample_count < 1:
        raise InputDomainError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.random((sample_count, 2))
    angles = rng.uniform(0.0, 2.0 * np.pi, sample_count)
    v = np.column_stack([np.cos(angles), np.sin(angles)])
    eigenvalues = np.linalg.eigvalsh(fiber_hessian(metric, x, v))[:, 0]
    worst = int(np.argmin(eigenvalues))
    lowest = float(eigenvalues[worst])
    logger.debug(f"Convexity scan over {sample_count} samples: min eigenvalue {lowest:.6g}")
    return ConvexityReport(
        min_eigenvalue=lowest,
        worst_point=(float(x[worst, 0]), float(x[worst, 1])),
        worst_direction=(float(v[worst, 0]), float(v[worst, 1])),
        tolerance=tolerance,
        passed=lowest > tolerance,
    )


def comparison_constant(metric: FinslerMetric, reference: Optional[ReferenceMetric] = None,
                        grid_resolution: int = 32, safety: float = COMPARISON_SAFETY) -> float:
    """
    Smallest sampled c >= 1 with F/c <= |.| <= c F, times ``safety``.
    Base points on an r x r grid, 4r unit directions (angle 0 included).
    """
    if grid_resolution < 8:
        raise InputDomainError("grid_resolution must be >= 8")
    reference = reference or ReferenceMetric()
    points = torus_grid(grid_resolution)
    angles = np.arange(4 * grid_resolution) * (2.0 * np.pi / (4 * grid_resolution))
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    xs = np.repeat(points, len(dirs), axis=0)
    vs = np.tile(dirs, (len(points), 1))
    speeds = metric(xs, vs)
    norms = reference.norm(vs)
    if np.min(speeds) <= 1e-12:
        raise InvalidMetricError(f"Metric degenerates on a unit vector (min F = {np.min(speeds):.3g})")
    ratio = speeds / norms
    sampled = max(1.0, float(np.max(ratio)), float(np.max(1.0 / ratio)))
    return sampled * safety


def conformal_scale(metric: FinslerMetric, factor: ConformalFactor) -> ConformalMetric:
    return ConformalMetric(metric, factor, check=True)


def seminorm_distance(f: ConformalFactor, g: ConformalFactor, k_max: int = DEFAULT_K_MAX,
                      resolution: Optional[int] = None) -> float:
    """sum_k 2^-k ||f-g||_k / (1 + ||f-g||_k) for k = 0..k_max."""
    if k_max < 0:
        raise InputDomainError("k_max must be >= 0")
    diff = (f - g).simplified()
    res = resolution or max(VERIFY_RESOLUTION, 8 * diff.max_mode + 1)
    grid = torus_grid(res)
    total = 0.0
    norm = 0.0
    for k in range(k_max + 1):
        for a in range(k + 1):
            norm = max(norm, float(np.max(np.abs(diff.partial(grid, (a, k - a))))))
        total += 2.0 ** (-k) * norm / (1.0 + norm)
    return total


def reversibility_defect(metric: FinslerMetric, sample_count: int = 1000, seed: int = 0) -> float:
    """max |F(x, v) - F(x, -v)| over random unit samples."""
    rng = np.random.default_rng(seed)
    x = rng.random((sample_count, 2))
    angles = rng.uniform(0.0, 2.0 * np.pi, sample_count)
    v = np.column_stack([np.cos(angles), np.sin(angles)])
    return float(np.max(np.abs(metric(x, v) - metric(x, -v))))
