"""
Shortest closed geodesics in a class (p, q) by discrete action minimization.

The descent minimizes A_F over vertex positions with the winding fixed by the
lift. Minimizers of A_F are constant-F-speed length minimizers, because A >= l^2
with equality exactly at constant speed.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import gcd
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from modules.errors import SolverFailureError, WindingMismatchError
from modules.loop_space import (
    DiscreteLoop,
    action,
    is_constant_speed,
    length,
    max_speed,
    mean_position,
    refine_loop,
    reparametrize_constant_speed,
    require_nontrivial,
    straight_loop,
)
from modules.metric_core import COMPARISON_SAFETY, FinslerMetric, ReferenceMetric, comparison_constant

logger = logging.getLogger(__name__)

SPEED_CAP_SLACK = 1e-6
MIN_STEP = 1e-14


# ============================================================================
# CONFIG & REPORT SCHEMAS
# ============================================================================

class StepRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    initial_step: float = Field(1.0, gt=0)
    shrink: float = Field(0.5, gt=0, lt=1)
    sufficient_decrease: float = Field(1e-4, gt=0, lt=1)


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_vertices: int = Field(128, ge=32)
    max_iters: int = Field(2000, ge=1)
    step_rule: StepRule = StepRule()
    grad_tol: float = Field(1e-8, gt=0)
    num_starts: int = Field(8, ge=1)
    cluster_tol: float = Field(0.05, gt=0)
    length_rtol: float = Field(1e-3, gt=0)
    jitter: float = Field(0.05, ge=0)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)

    @field_validator("n_vertices")
    @classmethod
    def even_vertex_count(cls, v: int) -> int:
        if v % 2:
            raise ValueError("n_vertices must be even so refinement stays on the grid")
        return v


@dataclass(frozen=True)
class DescentResult:
    loop: DiscreteLoop
    converged: bool
    iterations: int
    grad_norm: float
    initial_action: float
    final_action: float
    length: float
    action_history: Tuple[float, ...] = field(repr=False)


@dataclass(frozen=True)
class Cluster:
    representative: DiscreteLoop
    members: int
    length: float


@dataclass(frozen=True)
class MinimizerReport:
    winding: Tuple[int, int]
    clusters: Tuple[Cluster, ...]
    spread: float
    best_length: float
    runs: int
    converged_runs: int
    candidates: Tuple[DiscreteLoop, ...] = field(repr=False)


# ============================================================================
# CLASSES & BOUNDS
# ============================================================================

def homotopy_classes(max_norm: float) -> List[Tuple[int, int]]:
    """Nontrivial (p, q) with p^2 + q^2 <= max_norm^2, by norm then lexicographically."""
    r = int(np.floor(max_norm))
    classes = [(p, q) for p in range(-r, r + 1) for q in range(-r, r + 1)
               if 0 < p * p + q * q <= max_norm * max_norm]
    return sorted(classes, key=lambda c: (c[0] ** 2 + c[1] ** 2, c[0], c[1]))


def min_reference_length(winding: Tuple[int, int]) -> float:
    p, q = require_nontrivial(winding)
    return float(np.hypot(p, q))


def speed_bound(metric: FinslerMetric, winding: Tuple[int, int],
                reference: Optional[ReferenceMetric] = None,
                grid_resolution: int = 32, safety: float = COMPARISON_SAFETY) -> float:
    """C_0(F, gamma) = c_F^2 * min_gamma l_g."""
    c_f = comparison_constant(metric, reference, grid_resolution=grid_resolution, safety=safety)
    return c_f ** 2 * min_reference_length(winding)


def verify_speed_cap(metric: FinslerMetric, loop: DiscreteLoop, winding: Tuple[int, int],
                     reference: Optional[ReferenceMetric] = None,
                     grid_resolution: int = 32, safety: float = COMPARISON_SAFETY) -> bool:
    bound = speed_bound(metric, winding, reference, grid_resolution, safety)
    return max_speed(loop, reference) <= bound * (1.0 + SPEED_CAP_SLACK)


# ============================================================================
# DISCRETE ACTION & GRADIENT
# ============================================================================

def _segments(vertices: np.ndarray, winding: Tuple[int, int]):
    n = len(vertices)
    closed = np.vstack([vertices, vertices[0] + np.asarray(winding, dtype=float)])
    edges = np.diff(closed, axis=0)
    return 0.5 * (closed[:-1] + closed[1:]), n * edges


def discrete_action(metric: FinslerMetric, vertices: np.ndarray, winding: Tuple[int, int]) -> float:
    mids, vel = _segments(vertices, winding)
    return float(np.sum(metric(mids, vel) ** 2) / len(vertices))


def action_gradient(metric: FinslerMetric, vertices: np.ndarray,
                    winding: Tuple[int, int]) -> Tuple[float, np.ndarray]:
    """
    A = (1/N) sum_i F^2(m_i, w_i), m_i = (x_i + x_{i+1})/2, w_i = N (x_{i+1} - x_i).
    Returns A and dA/dx of shape (N, 2).
    """
    vertices = np.asarray(vertices, dtype=float)
    n = len(vertices)
    mids, vel = _segments(vertices, winding)
    speed, d_dx, d_dv = metric.jet(mids, vel)
    value = float(np.sum(speed ** 2) / n)
    g_mid = 2.0 * speed[:, None] * d_dx / n
    g_vel = 2.0 * speed[:, None] * d_dv
    # segment i touches x_i and x_{i+1}; roll(., 1)[i] is segment i - 1
    grad = 0.5 * (g_mid + np.roll(g_mid, 1, axis=0)) + (np.roll(g_vel, 1, axis=0) - g_vel)
    return value, grad


def _preconditioner(n: int, scale: float) -> np.ndarray:
    """Eigenvalues of scale * (2N L + 4/N), L the periodic second-difference operator."""
    k = np.arange(n)
    laplacian = 2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)
    return scale * (2.0 * n * laplacian + 4.0 / n)


def _metric_scale(vertices: np.ndarray, winding: Tuple[int, int], value: float) -> float:
    _, vel = _segments(vertices, winding)
    euclid = float(np.mean(np.sum(vel ** 2, axis=1)))
    return value / euclid if euclid > 0 else 1.0


# ============================================================================
# DESCENT
# ============================================================================

def initial_loop(winding: Tuple[int, int], config: SolverConfig,
                 offset: Tuple[float, float] = (0.0, 0.0), start_index: int = 0) -> DiscreteLoop:
    """Straight lift through ``offset`` plus seeded uniform jitter of amplitude ``config.jitter``."""
    base = straight_loop(winding, config.n_vertices, offset)
    rng = np.random.default_rng([config.seed, start_index])
    noise = rng.uniform(-config.jitter, config.jitter, size=base.vertices.shape)
    return DiscreteLoop(base.vertices + noise, base.winding)


def shortest_loop(metric: FinslerMetric, winding: Tuple[int, int], config: SolverConfig,
                  init: Union[DiscreteLoop, str] = "straight",
                  offset: Tuple[float, float] = (0.0, 0.0), start_index: int = 0) -> DescentResult:
    """
    Preconditioned gradient descent on the discrete action with Armijo
    backtracking. The preconditioner is the flat-metric Hessian (a circulant
    Laplacian, inverted by FFT) rescaled to the current F^2/|v|^2 ratio.
    """
    winding = require_nontrivial(winding)
    if isinstance(init, DiscreteLoop):
        if init.winding != winding:
            raise WindingMismatchError(f"Initial loop has class {init.winding}, expected {winding}")
        start = init
    else:
        start = initial_loop(winding, config, offset, start_index)

    rule = config.step_rule
    x = np.array(start.vertices, dtype=float)
    n = len(x)
    value, grad = action_gradient(metric, x, winding)
    history = [value]
    step = rule.initial_step
    iterations = 0

    while iterations < config.max_iters and float(np.max(np.abs(grad))) > config.grad_tol:
        eig = _preconditioner(n, _metric_scale(x, winding, value))
        direction = -np.real(np.fft.ifft(np.fft.fft(grad, axis=0) / eig[:, None], axis=0))
        slope = float(np.sum(grad * direction))
        t = min(2.0 * step, rule.initial_step)
        while t >= MIN_STEP:
            trial = x + t * direction
            trial_value = discrete_action(metric, trial, winding)
            if trial_value <= value + rule.sufficient_decrease * t * slope:
                break
            t *= rule.shrink
        else:
            logger.debug(f"Line search stalled at iteration {iterations} (|g| = {np.max(np.abs(grad)):.3e})")
            break
        step = t
        x = trial
        value, grad = action_gradient(metric, x, winding)
        history.append(value)
        iterations += 1

    grad_norm = float(np.max(np.abs(grad)))
    converged = grad_norm <= config.grad_tol
    loop = DiscreteLoop(x, winding)
    if not is_constant_speed(metric, loop):
        resampled = reparametrize_constant_speed(metric, loop)
        if action(metric, resampled) <= value:
            loop = resampled
    if not converged:
        logger.warning(f"Descent for class {winding} did not converge: |g| = {grad_norm:.3e} after {iterations} iterations")
    return DescentResult(
        loop=loop,
        converged=converged,
        iterations=iterations,
        grad_norm=grad_norm,
        initial_action=history[0],
        final_action=action(metric, loop),
        length=length(metric, loop),
        action_history=tuple(history),
    )


# ============================================================================
# MULTI-START MINIMIZER SET
# ============================================================================

def _distance_to_polygon(points: np.ndarray, loop: DiscreteLoop) -> np.ndarray:
    """Torus distance from each point to the closed polygon of ``loop``."""
    closed = loop.closed_vertices()
    edges = np.diff(closed, axis=0)
    # offset from each segment start, taken at the image nearest the segment midpoint
    offset = points[:, None, :] - (closed[:-1] + 0.5 * edges)[None, :, :]
    offset -= np.round(offset)
    offset += 0.5 * edges[None, :, :]
    sq = np.sum(edges ** 2, axis=1)
    u = np.clip(np.sum(offset * edges[None], axis=-1) / np.where(sq > 0, sq, 1.0), 0.0, 1.0)
    return np.linalg.norm(offset - u[..., None] * edges[None], axis=-1).min(axis=1)


def loop_distance(a: DiscreteLoop, b: DiscreteLoop) -> float:
    """
    Symmetric Hausdorff distance on T^2 between the vertices of each loop and
    the polygon of the other. Translates along the same closed line score 0.
    """
    if a.winding != b.winding:
        raise WindingMismatchError(f"Cannot compare loops of classes {a.winding} and {b.winding}")
    return float(max(_distance_to_polygon(a.vertices, b).max(), _distance_to_polygon(b.vertices, a).max()))


def start_offsets(winding: Tuple[int, int], num_starts: int) -> List[Tuple[float, float]]:
    """Translates across one period of straight (p, q) loops, on a uniform grid."""
    p, q = winding
    g = gcd(abs(p), abs(q))
    normal = np.array([-q, p], dtype=float) * g / float(p * p + q * q)
    return [tuple(float(c) for c in (k / num_starts) * normal) for k in range(num_starts)]


def _canonical_key(result: DescentResult):
    return (round(result.length, 12), tuple(np.round(result.loop.vertices.ravel(), 12)))


def minimizer_set(metric: FinslerMetric, winding: Tuple[int, int], config: SolverConfig) -> MinimizerReport:
    winding = require_nontrivial(winding)
    offsets = start_offsets(winding, config.num_starts)

    def run(k: int) -> DescentResult:
        return shortest_loop(metric, winding, config, offset=offsets[k], start_index=k)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run, range(config.num_starts)))
    else:
        results = [run(k) for k in range(config.num_starts)]

    converged = [r for r in results if r.converged]
    logger.info(f"Class {winding}: {len(converged)}/{len(results)} descents converged")
    if not converged:
        raise SolverFailureError(f"No descent converged for class {winding} ({len(results)} starts)")

    best = min(r.length for r in converged)
    kept = sorted((r for r in converged if r.length <= best * (1.0 + config.length_rtol)), key=_canonical_key)
    loops = [r.loop for r in kept]

    if len(kept) == 1:
        labels = np.array([1])
        spread = 0.0
    else:
        dist = np.array([[loop_distance(a, b) if i != j else 0.0 for j, b in enumerate(loops)]
                         for i, a in enumerate(loops)])
        dist = np.maximum(dist, dist.T)
        spread = float(dist.max())
        labels = fcluster(linkage(squareform(dist, checks=False), method="single"),
                          t=config.cluster_tol, criterion="distance")

    clusters: List[Cluster] = []
    seen = {}
    for idx, label in enumerate(labels):
        if label not in seen:
            seen[label] = [idx]
        else:
            seen[label].append(idx)
    for members in seen.values():
        rep = kept[members[0]]
        clusters.append(Cluster(representative=rep.loop, members=len(members), length=rep.length))

    return MinimizerReport(
        winding=winding,
        clusters=tuple(clusters),
        spread=spread,
        best_length=best,
        runs=len(results),
        converged_runs=len(converged),
        candidates=tuple(loops),
    )


def report_records(report: MinimizerReport) -> List[dict]:
    """One JSON-lines record per cluster."""
    records = []
    for i, cluster in enumerate(report.clusters):
        cx, cy = mean_position(cluster.representative)
        records.append({
            "kind": "cluster",
            "winding": list(report.winding),
            "cluster": i,
            "members": cluster.members,
            "length": cluster.length,
            "mean_position": [cx, cy],
            "spread": report.spread,
            "best_length": report.best_length,
        })
    return records


def refined_restart(metric: FinslerMetric, result: DescentResult, config: SolverConfig) -> DescentResult:
    """Double N by midpoint insertion and descend again from the refined loop."""
    refined = refine_loop(result.loop)
    finer = config.model_copy(update={"n_vertices": refined.n_vertices})
    return shortest_loop(metric, refined.winding, finer, init=refined)
