"""
Pushforward of loop measures to grid measures on T^2 and the pairing with
conformal factors: the link between the scaled action of a loop and a linear
functional over a convex set of measures.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from modules.errors import InputDomainError, ReportFormatError, ResolutionMismatchError
from modules.loop_space import DiscreteLoop, LoopMeasure, action, loop_measure, max_speed
from modules.mane_engine import ConvexBody, Functional, argmin_set
from modules.metric_core import ConformalFactor, FinslerMetric, conformal_scale

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 256
MIN_RESOLUTION = 8
TRANSFER_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Nonnegative mass per cell; ``weights[iy, ix]`` is the cell [ix/m, (ix+1)/m) x [iy/m, (iy+1)/m)."""
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InputDomainError(f"Grid weights must be a square array, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InputDomainError("Grid weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def resolution(self) -> int:
        return self.weights.shape[0]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def combine(self, other: "GridMeasure", theta: float) -> "GridMeasure":
        _require_same_resolution(self, other)
        return GridMeasure(theta * self.weights + (1.0 - theta) * other.weights)


def _require_same_resolution(a: GridMeasure, b: GridMeasure):
    if a.resolution != b.resolution:
        raise ResolutionMismatchError(f"Grid resolutions differ: {a.resolution} vs {b.resolution}")


def cell_centers(resolution: int) -> np.ndarray:
    """Centers in row-major (iy, ix) order, shape (m^2, 2) as (x, y)."""
    c = (np.arange(resolution) + 0.5) / resolution
    yy, xx = np.meshgrid(c, c, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def cell_index(points: np.ndarray, resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    wrapped = np.mod(np.asarray(points, dtype=float), 1.0)
    idx = np.floor(wrapped * resolution).astype(int) % resolution
    return idx[:, 1], idx[:, 0]


def pushforward(metric: FinslerMetric, measure: LoopMeasure,
                resolution: int = DEFAULT_RESOLUTION) -> GridMeasure:
    """Deposit w_i F^2(x_i, v_i) into the cell containing x_i."""
    if resolution < MIN_RESOLUTION:
        raise InputDomainError(f"Grid resolution must be >= {MIN_RESOLUTION}, got {resolution}")
    mass = measure.weights * metric(measure.base_points, measure.velocities) ** 2
    iy, ix = cell_index(measure.base_points, resolution)
    grid = np.zeros((resolution, resolution))
    np.add.at(grid, (iy, ix), mass)
    return GridMeasure(grid)


def loop_pushforward(metric: FinslerMetric, loop: DiscreteLoop,
                     resolution: int = DEFAULT_RESOLUTION) -> GridMeasure:
    """Pushforward of mu_c with the cap at the loop's own top speed."""
    return pushforward(metric, loop_measure(metric, loop, max_speed(loop)), resolution)


def pairing(factor: ConformalFactor, measure: GridMeasure) -> float:
    values = factor(cell_centers(measure.resolution))
    return float(np.dot(values, measure.weights.ravel()))


def action_consistency(metric: FinslerMetric, factor: ConformalFactor, loop: DiscreteLoop,
                       resolution: int = DEFAULT_RESOLUTION) -> float:
    scaled = action(conformal_scale(metric, factor), loop)
    paired = pairing(factor, loop_pushforward(metric, loop, resolution))
    return abs(scaled - paired)


def consistency_bound(factor: ConformalFactor, measure: GridMeasure) -> float:
    """Lip(lambda) * cell diagonal * total mass."""
    return factor.lipschitz_constant() * np.sqrt(2.0) / measure.resolution * measure.total_mass


@dataclass(frozen=True)
class SeparationVerdict:
    equal: bool
    witness: Optional[Tuple[int, int]]
    max_difference: float


def separation_test(first: GridMeasure, second: GridMeasure, tol: float = 1e-9) -> SeparationVerdict:
    """
    Equal iff every cell agrees within tol * (1 + max total mass). Otherwise the
    witness (iy, ix) is the first cell, in row-major order, of largest
    disagreement; the indicator of that cell separates the two measures.
    """
    _require_same_resolution(first, second)
    diff = np.abs(first.weights - second.weights)
    largest = float(np.max(diff))
    threshold = tol * (1.0 + max(first.total_mass, second.total_mass))
    if largest <= threshold:
        return SeparationVerdict(True, None, largest)
    iy, ix = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return SeparationVerdict(False, (int(iy), int(ix)), largest)


# ============================================================================
# MINIMIZER TRANSFER OVER A POOL
# ============================================================================

@dataclass(frozen=True)
class TransferReport:
    scaled_actions: Tuple[float, ...]
    pairings: Tuple[float, ...]
    bounds: Tuple[float, ...]
    best_index: int
    violations: int
    strict_violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


def minimizer_transfer(metric: FinslerMetric, factor: ConformalFactor, pool: Sequence[DiscreteLoop],
                       resolution: int = DEFAULT_RESOLUTION) -> TransferReport:
    """
    The loop c minimizing the sqrt(lambda)-scaled action over ``pool`` must also
    minimize phi(lambda, pushforward(mu_c')) over the pool, up to the cell
    quantization of both sides. ``strict_violations`` counts the comparisons
    that fail without the quantization allowance.
    """
    if not pool:
        raise InputDomainError("Minimizer transfer needs a non-empty pool")
    scaled_metric = conformal_scale(metric, factor)
    scaled = [action(scaled_metric, c) for c in pool]
    grids = [loop_pushforward(metric, c, resolution) for c in pool]
    pairs = [pairing(factor, g) for g in grids]
    bounds = [consistency_bound(factor, g) for g in grids]

    best = int(np.argmin(scaled))
    violations = 0
    strict_violations = 0
    for i, value in enumerate(pairs):
        if pairs[best] > value + TRANSFER_SLACK:
            strict_violations += 1
        if pairs[best] > value + TRANSFER_SLACK + bounds[best] + bounds[i]:
            violations += 1
            logger.warning(f"Pool loop {i} pairs below the action minimizer {best}: {value:.9g} < {pairs[best]:.9g}")
    return TransferReport(tuple(scaled), tuple(pairs), tuple(bounds), best, violations, strict_violations)


def pool_body(metric: FinslerMetric, pool: Sequence[DiscreteLoop],
              resolution: int = DEFAULT_RESOLUTION) -> ConvexBody:
    """Convex hull of the pushforwards, one flattened grid per vertex."""
    return ConvexBody(np.vstack([loop_pushforward(metric, c, resolution).weights.ravel() for c in pool]))


def factor_functional(factor: ConformalFactor, resolution: int = DEFAULT_RESOLUTION) -> Functional:
    return Functional(factor(cell_centers(resolution)))


def pool_argmin_count(metric: FinslerMetric, factor: ConformalFactor, pool: Sequence[DiscreteLoop],
                      resolution: int = DEFAULT_RESOLUTION, tol: float = 1e-12) -> int:
    body = pool_body(metric, pool, resolution)
    return len(argmin_set(factor_functional(factor, resolution), body, tol).active_vertices)


# ============================================================================
# CSV
# ============================================================================

def write_grid_csv(measure: GridMeasure, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["# resolution", measure.resolution, "total_mass", repr(measure.total_mass)])
        for row in measure.weights:
            writer.writerow([repr(float(w)) for w in row])
    return path


def read_grid_csv(path: Union[str, Path]) -> GridMeasure:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = [r for r in csv.reader(handle) if r]
    try:
        resolution = int(rows[0][1])
        weights: List[List[float]] = [[float(w) for w in r] for r in rows[1:]]
    except (IndexError, ValueError) as e:
        raise ReportFormatError(f"Malformed grid file {path}: {e}")
    if len(weights) != resolution or any(len(r) != resolution for r in weights):
        raise ReportFormatError(f"Grid file {path} does not hold a {resolution}x{resolution} table")
    return GridMeasure(np.array(weights))
