"""
Argmin sets of linear functionals over polytopes and the argmin-shrinking
perturbation f -> f + t g.

K is the convex hull of finitely many vertices in R^n and E = R^n acts by the
dot product, so m(f) and M(f) are computed by vertex enumeration: a linear
functional attains its minimum over a polytope on a face, and the diameter of
a face is the diameter of its vertex set.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist

from modules.errors import (
    ConstructionFailureError,
    InputDomainError,
    InvariantViolationError,
    PerturbationFailureError,
)

logger = logging.getLogger(__name__)

ARGMIN_TOL = 1e-12
EQ_G_TOL = 1e-9
MAX_REDRAWS = 64
MAX_HALVINGS = 60


@dataclass(frozen=True, eq=False)
class ConvexBody:
    vertices: np.ndarray

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float)
        if verts.ndim == 1:
            verts = verts[None, :]
        if verts.ndim != 2 or len(verts) < 1:
            raise InputDomainError("A convex body needs at least one vertex")
        if not np.all(np.isfinite(verts)):
            raise InputDomainError("Convex body vertices must be finite")
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    def diameter(self) -> float:
        return _diameter(self.vertices)

    def face(self, indices: Sequence[int]) -> "ConvexBody":
        return ConvexBody(self.vertices[list(indices)])


@dataclass(frozen=True, eq=False)
class Functional:
    coefficients: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=float).reshape(-1)
        if not np.all(np.isfinite(coeffs)):
            raise InputDomainError("Functional coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def zero(cls, dimension: int) -> "Functional":
        return cls(np.zeros(dimension))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.coefficients

    def __add__(self, other: "Functional") -> "Functional":
        return Functional(self.coefficients + other.coefficients)

    def __mul__(self, scalar: float) -> "Functional":
        return Functional(float(scalar) * self.coefficients)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))


@dataclass(frozen=True)
class ArgminSet:
    value: float
    active_vertices: Tuple[int, ...]
    diameter: float


def _diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    return float(np.max(pdist(points)))


def argmin_set(f: Functional, body: ConvexBody, tol: float = ARGMIN_TOL) -> ArgminSet:
    """m(f) over the vertices and the vertices within tol * (1 + |m|) of it."""
    if tol < 0:
        raise InputDomainError("Argmin tolerance must be nonnegative")
    values = f(body.vertices)
    lowest = float(np.min(values))
    active = np.flatnonzero(values <= lowest + tol * (1.0 + abs(lowest)))
    return ArgminSet(
        value=lowest,
        active_vertices=tuple(int(i) for i in active),
        diameter=_diameter(body.vertices[active]),
    )


def level_membership(f: Functional, body: ConvexBody, n: int, tol: float = ARGMIN_TOL) -> bool:
    """f in O_n = {diam M(f) < 1/n}."""
    return argmin_set(f, body, tol).diameter < 1.0 / n


# ============================================================================
# SEMICONTINUITY
# ============================================================================

@dataclass(frozen=True)
class ProbeReport:
    scales: Tuple[float, ...]
    value_gaps: Tuple[float, ...]
    diameters: Tuple[float, ...]
    base_diameter: float
    tail_start: int
    max_tail_gap: float
    gaps_monotone: bool
    diameter_violations: int
    limit_point_violations: int

    @property
    def passed(self) -> bool:
        return self.gaps_monotone and self.diameter_violations == 0 and self.limit_point_violations == 0


def semicontinuity_probe(f: Functional, body: ConvexBody, perturbations: Sequence[Functional],
                         scales: Sequence[float], tail_start: int = None,
                         tol: float = 1e-9, argmin_tol: float = ARGMIN_TOL) -> ProbeReport:
    """
    Perturb f along f_n = f + scale_n * perturbation_n. Checks on the tail
    (indices >= tail_start, default the second half):
      |m(f_n) - m(f)| non-increasing, diam M(f_n) <= diam M(f) + tol, and every
      active vertex of f_n is active for f (limit points of argmins are argmins).
    """
    scales = [float(s) for s in scales]
    if any(s <= 0 for s in scales) or any(b >= a for a, b in zip(scales, scales[1:])):
        raise InputDomainError("Scales must be positive and strictly decreasing")
    if len(perturbations) != len(scales):
        raise InputDomainError("Need one perturbation per scale")
    tail_start = len(scales) // 2 if tail_start is None else tail_start

    base = argmin_set(f, body, argmin_tol)
    base_active = set(base.active_vertices)
    gaps, diameters = [], []
    diameter_violations = 0
    limit_violations = 0
    for idx, (scale, g) in enumerate(zip(scales, perturbations)):
        current = argmin_set(f + scale * g, body, argmin_tol)
        gaps.append(abs(current.value - base.value))
        diameters.append(current.diameter)
        if idx >= tail_start:
            if current.diameter > base.diameter + tol:
                diameter_violations += 1
            if not set(current.active_vertices) <= base_active:
                limit_violations += 1

    tail = gaps[tail_start:]
    monotone = all(b <= a + 1e-15 for a, b in zip(tail, tail[1:]))
    return ProbeReport(
        scales=tuple(scales),
        value_gaps=tuple(gaps),
        diameters=tuple(diameters),
        base_diameter=base.diameter,
        tail_start=tail_start,
        max_tail_gap=max(tail) if tail else 0.0,
        gaps_monotone=monotone,
        diameter_violations=diameter_violations,
        limit_point_violations=limit_violations,
    )


# ============================================================================
# EXPOSED POINTS & THE SHRINKING PERTURBATION
# ============================================================================

def _unit_direction(rng: np.random.Generator, dimension: int) -> np.ndarray:
    v = rng.standard_normal(dimension)
    while np.linalg.norm(v) == 0.0:
        v = rng.standard_normal(dimension)
    return v / np.linalg.norm(v)


def lemma32_construct(body: ConvexBody, epsilon: float, seed: int,
                      max_draws: int = MAX_REDRAWS, tol: float = ARGMIN_TOL) -> Functional:
    """
    A functional g with diam M_0(g) <= epsilon on ``body``. The coordinate
    functionals already separate points, so g is a random unit direction; for a
    polytope almost every direction exposes a single vertex.
    """
    if epsilon <= 0:
        raise InputDomainError("epsilon must be positive")
    rng = np.random.default_rng(seed)
    for draw in range(1, max_draws + 1):
        g = Functional(_unit_direction(rng, body.dimension))
        found = argmin_set(g, body, tol)
        if found.diameter <= epsilon:
            logger.debug(f"Exposing direction accepted on draw {draw} (diam {found.diameter:.3g})")
            return g
    raise ConstructionFailureError(f"No exposing direction with diam <= {epsilon} in {max_draws} draws")


@dataclass(frozen=True)
class PerturbationStep:
    t: float
    value: float
    value_bound: float
    diameter: float
    max_g_on_active: float


@dataclass(frozen=True)
class PerturbationResult:
    functional: Functional
    t: float
    g: Functional
    base_diameter: float
    diameter: float
    steps: Tuple[PerturbationStep, ...] = field(repr=False)


def lemma33_perturb(f: Functional, body: ConvexBody, epsilon: float, delta: float, seed: int,
                    max_halvings: int = MAX_HALVINGS, tol: float = ARGMIN_TOL) -> PerturbationResult:
    """
    Shrink M(f) below epsilon within distance delta of f: g exposes a small
    face of K_0 = M(f), and t runs down t_k = delta / (|g| 2^k) until
    diam M(f + t g) <= epsilon. Every step asserts
      m(f + t g) <= m(f) + t m_0(g)            (value bound)
      phi(g, x) <= m_0(g) for x in M(f + t g)  (active vertices stay g-minimal)
    """
    if epsilon <= 0 or delta <= 0:
        raise InputDomainError("epsilon and delta must be positive")
    base = argmin_set(f, body, tol)
    face = body.face(base.active_vertices)
    g = lemma32_construct(face, epsilon / 2.0, seed, tol=tol)
    m0 = float(np.min(g(face.vertices)))
    base_slack = tol * (1.0 + abs(base.value))

    steps: List[PerturbationStep] = []
    for k in range(max_halvings + 1):
        t = delta / (g.norm() * 2.0 ** k)
        candidate = f + t * g
        current = argmin_set(candidate, body, tol)
        bound = base.value + t * m0
        slack = tol * (1.0 + abs(current.value)) + base_slack
        g_active = float(np.max(g(body.vertices[list(current.active_vertices)])))
        steps.append(PerturbationStep(t, current.value, bound, current.diameter, g_active))
        logger.debug(f"t={t:.3e}: m={current.value:.6g} bound={bound:.6g} diam={current.diameter:.3e}")

        if current.value > bound + slack:
            raise InvariantViolationError(f"m(f + t g) = {current.value} exceeds m(f) + t m0 = {bound} at t = {t}")
        if g_active > m0 + EQ_G_TOL + slack / t:
            raise InvariantViolationError(f"phi(g, .) = {g_active} exceeds m0(g) = {m0} on M(f + t g) at t = {t}")
        if current.diameter <= epsilon:
            if (candidate + (-1.0) * f).norm() > delta * (1.0 + 1e-12):
                raise InvariantViolationError(f"|f* - f| exceeds delta = {delta} at t = {t}")
            return PerturbationResult(candidate, t, g, base.diameter, current.diameter, tuple(steps))

    raise PerturbationFailureError(
        f"diam M(f + t g) stayed above {epsilon} for {max_halvings + 1} values of t (last {steps[-1].diameter:.3e})"
    )


def genericity_sweep(body: ConvexBody, sample_count: int, epsilon: float, seed: int,
                     tol: float = ARGMIN_TOL) -> float:
    """Fraction of random unit functionals whose argmin set has diameter <= epsilon."""
    if sample_count < 1:
        raise InputDomainError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(sample_count):
        f = Functional(_unit_direction(rng, body.dimension))
        if argmin_set(f, body, tol).diameter <= epsilon:
            hits += 1
    return hits / sample_count


# ============================================================================
# POLYTOPE I/O & SAMPLING
# ============================================================================

def random_polytope(rng: np.random.Generator, max_dimension: int = 8, max_vertices: int = 40,
                    integer: bool = False) -> ConvexBody:
    n = int(rng.integers(1, max_dimension + 1))
    count = int(rng.integers(1, max_vertices + 1))
    if integer:
        return ConvexBody(rng.integers(-5, 6, size=(count, n)).astype(float))
    return ConvexBody(rng.uniform(-1.0, 1.0, size=(count, n)))


def enumerate_minimizers(f: Functional, body: ConvexBody) -> Tuple[float, Tuple[int, ...]]:
    """Exhaustive pass with exact comparisons."""
    best = None
    active: List[int] = []
    for i, vertex in enumerate(body.vertices):
        value = float(sum(c * x for c, x in zip(f.coefficients, vertex)))
        if best is None or value < best:
            best, active = value, [i]
        elif value == best:
            active.append(i)
    return best, tuple(active)


def load_polytope_csv(path: Union[str, Path]) -> ConvexBody:
    return ConvexBody(np.loadtxt(path, delimiter=",", ndmin=2, comments="#"))


def load_functional_csv(path: Union[str, Path]) -> Functional:
    return Functional(np.loadtxt(path, delimiter=",", ndmin=1, comments="#"))
