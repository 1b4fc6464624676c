"""
Discrete free loops on T^2, their F-length and action, and loop measures.

A loop is stored as a lift to R^2: vertices x_0 .. x_{N-1} at parameters
t_i = i/N, closed by x_N := x_0 + (p, q).
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np

from modules.errors import (
    DegenerateLoopError,
    InputDomainError,
    MalformedLoopError,
    SpeedCapError,
    TrivialClassError,
)
from modules.metric_core import FinslerMetric, ReferenceMetric

logger = logging.getLogger(__name__)

MIN_VERTICES = 8
CLOSURE_TOL = 1e-9
CONSTANT_SPEED_RTOL = 1e-6
RESAMPLE_MAX_ITERS = 200
RESAMPLE_SPEED_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DiscreteLoop:
    vertices: np.ndarray
    winding: Tuple[int, int]

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise MalformedLoopError(f"Vertices must have shape (N, 2), got {verts.shape}")
        if len(verts) < MIN_VERTICES:
            raise MalformedLoopError(f"A loop needs at least {MIN_VERTICES} vertices, got {len(verts)}")
        if not np.all(np.isfinite(verts)):
            raise MalformedLoopError("Loop vertices must be finite")
        p, q = self.winding
        if int(p) != p or int(q) != q:
            raise MalformedLoopError(f"Winding must be an integer pair, got {self.winding}")
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "winding", (int(p), int(q)))

    @classmethod
    def from_lift(cls, points) -> "DiscreteLoop":
        """Build from N + 1 lifted points whose last point is the first shifted by an integer vector."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise MalformedLoopError(f"Lift must have shape (N + 1, 2), got {pts.shape}")
        shift = pts[-1] - pts[0]
        rounded = np.round(shift)
        if np.max(np.abs(shift - rounded)) > CLOSURE_TOL:
            raise MalformedLoopError(f"Lift does not close up on the torus: endpoint offset {shift}")
        return cls(pts[:-1], (int(rounded[0]), int(rounded[1])))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def closed_vertices(self) -> np.ndarray:
        """x_0 .. x_N including the shifted copy of x_0."""
        return np.vstack([self.vertices, self.vertices[0] + np.asarray(self.winding, dtype=float)])

    def edges(self) -> np.ndarray:
        return np.diff(self.closed_vertices(), axis=0)

    def midpoints(self) -> np.ndarray:
        closed = self.closed_vertices()
        return 0.5 * (closed[:-1] + closed[1:])

    def velocities(self) -> np.ndarray:
        """Segment velocities N * dx_i of the piecewise-linear parametrization."""
        return self.n_vertices * self.edges()


def require_nontrivial(winding: Tuple[int, int]) -> Tuple[int, int]:
    if tuple(winding) == (0, 0):
        raise TrivialClassError("The trivial class (0, 0) is not a class in Gamma(T^2)")
    return (int(winding[0]), int(winding[1]))


def straight_loop(winding: Tuple[int, int], n_vertices: int,
                  offset: Tuple[float, float] = (0.0, 0.0)) -> DiscreteLoop:
    """Straight lift from ``offset`` to ``offset + winding`` with uniform vertices."""
    t = np.arange(n_vertices)[:, None] / n_vertices
    verts = np.asarray(offset, dtype=float)[None, :] + t * np.asarray(winding, dtype=float)[None, :]
    return DiscreteLoop(verts, winding)


def winding_class(loop: DiscreteLoop) -> Tuple[int, int]:
    closed = loop.closed_vertices()
    shift = closed[-1] - closed[0]
    rounded = np.round(shift)
    if np.max(np.abs(shift - rounded)) > CLOSURE_TOL:
        raise MalformedLoopError(f"Loop closure violated: endpoint offset {shift}")
    return (int(rounded[0]), int(rounded[1]))


def segment_lengths(metric: FinslerMetric, loop: DiscreteLoop) -> np.ndarray:
    """F(m_i, dx_i), coefficients frozen at segment midpoints."""
    return metric(loop.midpoints(), loop.edges())


def length(metric: FinslerMetric, loop: DiscreteLoop) -> float:
    return float(np.sum(segment_lengths(metric, loop)))


def action(metric: FinslerMetric, loop: DiscreteLoop) -> float:
    """(1/N) sum_i F^2(m_i, N dx_i), the Riemann sum of int_0^1 F^2(c') dt."""
    speeds = metric(loop.midpoints(), loop.velocities())
    return float(np.sum(speeds ** 2) / loop.n_vertices)


def cs_gap(metric: FinslerMetric, loop: DiscreteLoop) -> float:
    """action - length^2; nonnegative by the discrete Cauchy-Schwarz inequality."""
    return action(metric, loop) - length(metric, loop) ** 2


def is_constant_speed(metric: FinslerMetric, loop: DiscreteLoop, rtol: float = CONSTANT_SPEED_RTOL) -> bool:
    return cs_gap(metric, loop) <= rtol * action(metric, loop)


def cyclic_shift(loop: DiscreteLoop, k: int) -> DiscreteLoop:
    """Same loop with the parameter shifted by k/N (vertex x_k becomes the start)."""
    closed_twice = np.vstack([loop.vertices, loop.vertices + np.asarray(loop.winding, dtype=float)])
    k = k % loop.n_vertices
    return DiscreteLoop(closed_twice[k:k + loop.n_vertices], loop.winding)


def refine_loop(loop: DiscreteLoop) -> DiscreteLoop:
    """Insert edge midpoints: 2N vertices on the same polygon."""
    closed = loop.closed_vertices()
    mids = 0.5 * (closed[:-1] + closed[1:])
    verts = np.empty((2 * loop.n_vertices, 2))
    verts[0::2] = loop.vertices
    verts[1::2] = mids
    return DiscreteLoop(verts, loop.winding)


def mean_position(loop: DiscreteLoop) -> Tuple[float, float]:
    """Circular mean of the projected vertices, per coordinate, in [0, 1)."""
    angles = 2.0 * np.pi * loop.vertices
    mean = np.arctan2(np.mean(np.sin(angles), axis=0), np.mean(np.cos(angles), axis=0))
    cx, cy = np.mod(mean / (2.0 * np.pi), 1.0)
    return float(cx), float(cy)


def _polygon_segment(cumulative: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.clip(np.searchsorted(cumulative, s, side="right") - 1, 0, len(cumulative) - 2)


def _polygon_point(closed: np.ndarray, cumulative: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Points at arc positions ``s`` on the polygon with vertex arc positions ``cumulative``."""
    idx = _polygon_segment(cumulative, s)
    seg = cumulative[idx + 1] - cumulative[idx]
    frac = np.where(seg > 0, (s - cumulative[idx]) / np.where(seg > 0, seg, 1.0), 0.0)
    return closed[idx] + frac[:, None] * (closed[idx + 1] - closed[idx])


def _polygon_tangent(closed: np.ndarray, cumulative: np.ndarray, s: np.ndarray) -> np.ndarray:
    """d/ds of the polygon point at arc positions ``s``."""
    idx = _polygon_segment(cumulative, s)
    seg = cumulative[idx + 1] - cumulative[idx]
    return (closed[idx + 1] - closed[idx]) / np.where(seg > 0, seg, np.inf)[:, None]


def _newton_positions(positions: np.ndarray, total: float, chords: np.ndarray,
                      d_dx: np.ndarray, d_dv: np.ndarray, tangents: np.ndarray) -> Optional[np.ndarray]:
    """
    One Newton step on chord_i(s) = c for the unknowns s_1 .. s_{N-1} and c,
    with s_0 = 0 and s_N = total held fixed. None if the step leaves the polygon
    order or the system is singular.
    """
    n = len(chords)
    rows = np.arange(n)
    jac = np.zeros((n, n))
    # chord i starts at s_i (column i - 1) and ends at s_{i+1} (column i); the last column is c
    jac[rows[1:], rows[1:] - 1] = np.sum((0.5 * d_dx[1:] - d_dv[1:]) * tangents[1:], axis=1)
    jac[rows[:-1], rows[:-1]] = np.sum((0.5 * d_dx[:-1] + d_dv[:-1]) * tangents[1:], axis=1)
    jac[:, -1] = -1.0
    try:
        step = np.linalg.solve(jac, -chords)
    except np.linalg.LinAlgError:
        return None
    candidate = positions.copy()
    candidate[1:] += step[:-1]
    if not np.all(np.isfinite(candidate)) or np.any(np.diff(np.append(candidate, total)) <= 0.0):
        return None
    return candidate


def reparametrize_constant_speed(metric: FinslerMetric, loop: DiscreteLoop) -> DiscreteLoop:
    """
    Move the N vertices along the polygon, keeping x_0 and the traversal order,
    until every chord has the same F-length. The first pass is F-arc-length
    resampling; later passes take Newton steps on the chord equations, falling
    back to re-inverting the cumulative chord length when a step is rejected.
    """
    n = loop.n_vertices
    closed = loop.closed_vertices()
    seg = segment_lengths(metric, loop)
    total = float(np.sum(seg))
    if total <= 0.0:
        raise DegenerateLoopError("Cannot reparametrize a loop of zero F-length")
    cumulative = np.concatenate([[0.0], np.cumsum(seg)])
    cumulative[-1] = total
    shift = np.asarray(loop.winding, dtype=float)

    positions = np.arange(n) * (total / n)
    previous = np.inf
    for iteration in range(RESAMPLE_MAX_ITERS):
        verts = _polygon_point(closed, cumulative, positions)
        ends = np.vstack([verts[1:], verts[:1] + shift])
        chords, d_dx, d_dv = metric.jet(0.5 * (verts + ends), ends - verts)
        mean = float(np.mean(chords))
        residual = float(np.max(np.abs(chords - mean))) / mean
        if residual <= RESAMPLE_SPEED_TOL:
            break
        candidate = None
        if residual < previous:
            tangents = _polygon_tangent(closed, cumulative, positions)
            candidate = _newton_positions(positions, total, chords, d_dx, d_dv, tangents)
        if candidate is None:
            chord_cum = np.concatenate([[0.0], np.cumsum(chords)])
            targets = np.arange(n) * (chord_cum[-1] / n)
            candidate = np.interp(targets, chord_cum, np.concatenate([positions, [total]]))
        positions = candidate
        previous = residual
    else:
        logger.warning(f"Constant-speed resampling stopped after {RESAMPLE_MAX_ITERS} passes")
    return DiscreteLoop(verts, loop.winding)


# ============================================================================
# LOOP MEASURES
# ============================================================================

@dataclass(frozen=True, eq=False)
class LoopMeasure:
    """
    Atomic probability measure on the tangent bundle: samples (x_i, v_i) with
    weights summing to one, all velocities within the speed cap b.
    """
    base_points: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    speed_cap: float

    def __post_init__(self):
        for name in ("base_points", "velocities", "weights"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.weights < 0):
            raise InputDomainError("Loop measure weights must be nonnegative")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise InputDomainError(f"Loop measure weights must sum to 1, got {np.sum(self.weights)}")
        speeds = np.linalg.norm(self.velocities, axis=-1)
        if len(speeds) and float(np.max(speeds)) > self.speed_cap:
            raise SpeedCapError(f"Sample speed {np.max(speeds):.6g} exceeds the cap b = {self.speed_cap:.6g}")

    def integrate(self, integrand: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        return float(np.sum(self.weights * integrand(self.base_points, self.velocities)))

    def mix(self, other: "LoopMeasure", theta: float) -> "LoopMeasure":
        """theta * self + (1 - theta) * other, formed samplewise."""
        if not 0.0 <= theta <= 1.0:
            raise InputDomainError(f"Mixing weight must lie in [0, 1], got {theta}")
        return LoopMeasure(
            np.vstack([self.base_points, other.base_points]),
            np.vstack([self.velocities, other.velocities]),
            np.concatenate([theta * self.weights, (1.0 - theta) * other.weights]),
            max(self.speed_cap, other.speed_cap),
        )


def max_speed(loop: DiscreteLoop, reference: Optional[ReferenceMetric] = None) -> float:
    reference = reference or ReferenceMetric()
    return float(np.max(reference.norm(loop.velocities())))


def loop_measure(metric: FinslerMetric, loop: DiscreteLoop, b: float,
                 reference: Optional[ReferenceMetric] = None) -> LoopMeasure:
    """mu_c: uniform weights on (m_i mod 1, N dx_i). ``metric`` is unused by the measure itself."""
    fastest = max_speed(loop, reference)
    if fastest > b:
        raise SpeedCapError(f"Loop speed {fastest:.6g} exceeds the cap b = {b:.6g}")
    n = loop.n_vertices
    return LoopMeasure(
        base_points=np.mod(loop.midpoints(), 1.0),
        velocities=loop.velocities(),
        weights=np.full(n, 1.0 / n),
        speed_cap=float(b),
    )


def measure_action(metric: FinslerMetric, measure: LoopMeasure) -> float:
    """A_F(mu) = int F^2 d mu."""
    return measure.integrate(lambda x, v: metric(x, v) ** 2)


# ============================================================================
# CSV
# ============================================================================

def write_loop_csv(loop: DiscreteLoop, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["# n_vertices", loop.n_vertices, "p", loop.winding[0], "q", loop.winding[1]])
        writer.writerow(["x", "y"])
        for x, y in loop.vertices:
            writer.writerow([repr(float(x)), repr(float(y))])
    return path


def read_loop_csv(path: Union[str, Path]) -> DiscreteLoop:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    try:
        header = rows[0]
        n, p, q = int(header[1]), int(header[3]), int(header[5])
        verts = np.array([[float(r[0]), float(r[1])] for r in rows[2:] if r], dtype=float)
    except (IndexError, ValueError) as e:
        raise MalformedLoopError(f"Malformed loop file {path}: {e}")
    if len(verts) != n:
        raise MalformedLoopError(f"Loop file {path} declares {n} vertices but holds {len(verts)}")
    return DiscreteLoop(verts, (p, q))
