"""
Experiment configs, runners and reports for the lab CLI.

A config is a UTF-8 text file of ``key = value`` lines with ``#`` comments.
Fourier coefficients of the conformal factor are given as
``mode_kx,ky = cos_coeff,sin_coeff`` lines; a non-constant Randers one-form
uses ``beta_x_mode_kx,ky`` / ``beta_y_mode_kx,ky`` lines the same way.
"""
import csv
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

import settings
from modules.errors import ConfigError, LabError, ReportFormatError
from modules.geodesic_solver import (
    SolverConfig,
    StepRule,
    action_gradient,
    discrete_action,
    homotopy_classes,
    loop_distance,
    minimizer_set,
    report_records,
    shortest_loop,
    start_offsets,
    verify_speed_cap,
)
from modules.loop_space import (
    DiscreteLoop,
    action,
    cs_gap,
    length,
    mean_position,
    read_loop_csv,
    reparametrize_constant_speed,
    straight_loop,
    write_loop_csv,
)
from modules.mane_engine import (
    ConvexBody,
    Functional,
    argmin_set,
    enumerate_minimizers,
    genericity_sweep,
    lemma33_perturb,
    level_membership,
    load_functional_csv,
    load_polytope_csv,
    random_polytope,
    semicontinuity_probe,
)
from modules.measure_bridge import (
    action_consistency,
    consistency_bound,
    loop_pushforward,
    minimizer_transfer,
    pool_argmin_count,
)
from modules.metric_core import (
    ConformalFactor,
    FinslerMetric,
    RandersMetric,
    bump_factor,
    conformal_scale,
    cosine_squared_factor,
    euclidean,
    randers_constant,
    riemannian_constant,
)

logger = logging.getLogger(__name__)

EXPERIMENTS = (
    "uniqueness",
    "cs-property",
    "speed-cap",
    "mane-polytope",
    "consistency",
    "semicontinuity",
    "gradient-check",
    "multi-class",
)

ModeRow = Tuple[int, int, float, float]

# spreads closer than this fraction of cluster_tol count as equal
SPREAD_SLACK_FRACTION = 0.1


# ============================================================================
# CONFIG
# ============================================================================

def _split_numbers(value):
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    experiment: Literal[EXPERIMENTS]
    seed: int = Field(0, ge=0)
    out: Optional[str] = None

    # metric
    metric: Literal["euclidean", "riemannian", "randers"] = "euclidean"
    g11: float = 1.0
    g12: float = 0.0
    g22: float = 1.0
    beta_x: float = 0.0
    beta_y: float = 0.0
    beta_x_modes: List[ModeRow] = []
    beta_y_modes: List[ModeRow] = []
    factor: Literal["none", "bump", "cosine-squared", "fourier"] = "none"
    conformal_offset: float = 1.0
    factor_modes: List[ModeRow] = []
    bump_center: float = 0.25
    gamma: Tuple[int, int] = (1, 0)

    # solver
    n_vertices: int = 128
    max_iters: int = 2000
    grad_tol: float = 1e-8
    num_starts: int = 50
    cluster_tol: float = 0.05
    length_rtol: float = 1e-3
    jitter: float = 0.05
    initial_step: float = 1.0
    workers: int = Field(1, ge=1)

    # conformal perturbation
    amplitude: float = Field(0.2, ge=0)
    amplitudes: List[float] = [0.0, 0.05, 0.1, 0.2]

    # trials and Mane parameters
    trials: int = Field(100, ge=1)
    max_dimension: int = Field(8, ge=1)
    max_vertex_count: int = Field(40, ge=1)
    epsilon: float = Field(1e-3, gt=0)
    delta: float = Field(0.1, gt=0)
    level_n: int = Field(1000, ge=1)
    genericity_samples: int = Field(100, ge=1)
    scale_count: int = Field(20, ge=2)
    tail_exponent: int = Field(10, ge=1)
    polytope_file: Optional[str] = None
    functional_file: Optional[str] = None

    # bridge and checks
    resolution: int = Field(256, ge=8)
    pool_size: int = Field(8, ge=1)
    fd_step: float = Field(1e-6, gt=0)
    gradient_rtol: float = Field(1e-5, gt=0)
    check_vertices: int = Field(32, ge=8)
    max_class_norm: float = Field(1.5, ge=1)
    loop_file: Optional[str] = None

    @field_validator("gamma", "amplitudes", mode="before")
    @classmethod
    def split_lists(cls, v):
        return _split_numbers(v)

    @field_validator("gamma")
    @classmethod
    def nontrivial_class(cls, v):
        if tuple(v) == (0, 0):
            raise ValueError("gamma must be a nontrivial class")
        return v

    @field_validator("polytope_file", "functional_file", "loop_file")
    @classmethod
    def file_exists(cls, v):
        if v is not None and not Path(v).is_file():
            raise ValueError(f"referenced file does not exist: {v}")
        return v

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            n_vertices=self.n_vertices,
            max_iters=self.max_iters,
            step_rule=StepRule(initial_step=self.initial_step),
            grad_tol=self.grad_tol,
            num_starts=self.num_starts,
            cluster_tol=self.cluster_tol,
            length_rtol=self.length_rtol,
            jitter=self.jitter,
            seed=self.seed,
            workers=self.workers,
        )


def _mode_row(key: str, prefix: str, value: str) -> ModeRow:
    kx, ky = (int(k) for k in key[len(prefix):].split(","))
    a, b = (float(c) for c in value.split(","))
    return (kx, ky, a, b)


def parse_assignments(lines: Sequence[str], source: str = "<config>") -> Dict[str, object]:
    """key = value lines to a raw dict; mode lines are gathered into row lists."""
    raw: Dict[str, object] = {}
    modes: Dict[str, Dict[Tuple[int, int], ModeRow]] = {}
    for number, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        try:
            for prefix, target in (("beta_x_mode_", "beta_x_modes"), ("beta_y_mode_", "beta_y_modes"),
                                   ("mode_", "factor_modes")):
                if key.startswith(prefix):
                    row = _mode_row(key, prefix, value)
                    modes.setdefault(target, {})[(row[0], row[1])] = row
                    break
            else:
                raw[key] = value
        except ValueError:
            raise ConfigError(f"{source}:{number}: malformed Fourier line {line.strip()!r}")
    for target, rows in modes.items():
        raw[target] = list(rows.values())
    return raw


def load_config(path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = (),
                seed: Optional[int] = None, out: Optional[str] = None,
                experiment: Optional[str] = None) -> ExperimentConfig:
    """Model defaults < environment < file < --override < explicit flags."""
    raw: Dict[str, object] = {"seed": settings.DEFAULT_SEED, "workers": settings.WORKERS}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}")
        raw.update(parse_assignments(text.splitlines(), str(path)))
    override_raw = parse_assignments(overrides, "--override")
    for key in ("beta_x_modes", "beta_y_modes", "factor_modes"):
        if key in override_raw:
            merged = {(r[0], r[1]): r for r in raw.get(key, [])}
            merged.update({(r[0], r[1]): r for r in override_raw.pop(key)})
            raw[key] = list(merged.values())
    raw.update(override_raw)
    for key, value in (("seed", seed), ("out", out), ("experiment", experiment)):
        if value is not None:
            raw[key] = value
    try:
        config = ExperimentConfig(**raw)
        config.solver_config()
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e}")
    return config


# ============================================================================
# METRIC CONSTRUCTION
# ============================================================================

def _factor_from_rows(rows: Sequence[ModeRow], offset: float, positive: bool) -> ConformalFactor:
    return ConformalFactor.from_modes({(r[0], r[1]): (r[2], r[3]) for r in rows},
                                      constant_offset=offset, positive=positive)


def base_metric(config: ExperimentConfig) -> FinslerMetric:
    if config.metric == "euclidean":
        return euclidean()
    riemannian = riemannian_constant(config.g11, config.g12, config.g22)
    if config.metric == "riemannian":
        return riemannian
    return RandersMetric(
        riemannian,
        _factor_from_rows(config.beta_x_modes, config.beta_x, positive=False),
        _factor_from_rows(config.beta_y_modes, config.beta_y, positive=False),
    )


def config_factor(config: ExperimentConfig, amplitude: Optional[float] = None) -> Optional[ConformalFactor]:
    t = config.amplitude if amplitude is None else amplitude
    if config.factor == "bump":
        return bump_factor(t, config.bump_center)
    if config.factor == "cosine-squared":
        return cosine_squared_factor(t, config.bump_center)
    if config.factor == "fourier":
        return _factor_from_rows(config.factor_modes, config.conformal_offset, positive=True)
    return None


def build_metric(config: ExperimentConfig, amplitude: Optional[float] = None) -> FinslerMetric:
    base = base_metric(config)
    t = config.amplitude if amplitude is None else amplitude
    if config.factor == "none" or (config.factor in ("bump", "cosine-squared") and t == 0.0):
        return base
    return conformal_scale(base, config_factor(config, t))


# ============================================================================
# RANDOM FIXTURES FOR PROPERTY EXPERIMENTS
# ============================================================================

def random_loop(rng: np.random.Generator, winding: Tuple[int, int], n_vertices: int,
                amplitude: float = 0.05, modes: int = 3) -> DiscreteLoop:
    """Straight lift with a monotone reparametrization and a smooth periodic bump."""
    t = np.arange(n_vertices) / n_vertices
    warp = rng.uniform(-0.6, 0.6)
    s = t + warp * np.sin(2.0 * np.pi * t) / (2.0 * np.pi)
    verts = rng.random(2)[None, :] + s[:, None] * np.asarray(winding, dtype=float)[None, :]
    for k in range(1, modes + 1):
        a, b = rng.uniform(-amplitude, amplitude, size=(2, 2)) / k
        verts = verts + np.outer(np.cos(2.0 * np.pi * k * s), a) + np.outer(np.sin(2.0 * np.pi * k * s), b)
    return DiscreteLoop(verts, winding)


def random_factor(rng: np.random.Generator, max_mode: int = 2, scale: float = 0.05,
                  offset: float = 1.0, positive: bool = True) -> ConformalFactor:
    """Offset plus every mode up to ``max_mode`` with coefficients in [-scale, scale]."""
    coefficients = {}
    for kx in range(0, max_mode + 1):
        for ky in range(-max_mode, max_mode + 1):
            if (kx, ky) > (0, 0):
                coefficients[(kx, ky)] = tuple(rng.uniform(-scale, scale, size=2))
    return ConformalFactor.from_modes(coefficients, constant_offset=offset, positive=positive)


def random_metric(rng: np.random.Generator, family: str) -> FinslerMetric:
    if family == "flat":
        return euclidean()
    if family == "randers":
        beta = rng.uniform(-0.4, 0.4, size=2)
        base = riemannian_constant(1.0 + rng.uniform(0, 0.5), rng.uniform(-0.2, 0.2), 1.0 + rng.uniform(0, 0.5))
        return randers_constant((beta[0], beta[1]), base)
    if family == "randers-fourier":
        return RandersMetric(euclidean(), random_factor(rng, 1, 0.05, 0.1, positive=False),
                             random_factor(rng, 1, 0.05, -0.1, positive=False))
    return conformal_scale(euclidean(), random_factor(rng))


METRIC_FAMILIES = ("flat", "randers", "randers-fourier", "conformal")


# ============================================================================
# RUNNERS
# ============================================================================

Outcome = Tuple[List[dict], Dict[str, bool]]


def _loop_record(loop: DiscreteLoop, **extra) -> dict:
    return {"kind": "loop", "winding": list(loop.winding),
            "vertices": [[float(x), float(y)] for x, y in loop.vertices], **extra}


def _error_record(error: LabError, **extra) -> dict:
    logger.warning(f"Recorded failure: {type(error).__name__}: {error}")
    return {"kind": "error", "error": type(error).__name__, "message": str(error), **extra}


def translate_oracle(metric: FinslerMetric, winding: Tuple[int, int], n_vertices: int,
                     samples: int = 1000) -> Tuple[DiscreteLoop, float]:
    """Brute force over ``samples`` straight translates across one period."""
    loops = [straight_loop(winding, n_vertices, offset) for offset in start_offsets(winding, samples)]
    lengths = [length(metric, c) for c in loops]
    best = int(np.argmin(lengths))
    return loops[best], float(lengths[best])


def run_uniqueness(config: ExperimentConfig) -> Outcome:
    if config.factor == "none":
        config = config.model_copy(update={"factor": "bump"})
    solver = config.solver_config()
    records: List[dict] = []
    spreads: Dict[float, float] = {}
    verdicts: Dict[str, bool] = {}
    amplitudes = sorted(config.amplitudes)
    for t in amplitudes:
        metric = build_metric(config, t)
        try:
            report = minimizer_set(metric, config.gamma, solver)
        except LabError as e:
            records.append(_error_record(e, t=t))
            verdicts[f"solved_t={t}"] = False
            continue
        spreads[t] = report.spread
        best = min(report.clusters, key=lambda c: c.length).representative
        records.append({
            "kind": "run",
            "t": t,
            "spread": report.spread,
            "clusters": len(report.clusters),
            "best_length": report.best_length,
            "converged_runs": report.converged_runs,
            "runs": report.runs,
            "mean_position": list(mean_position(best)),
        })
        records.extend({**r, "t": t} for r in report_records(report))
        records.append(_loop_record(best, t=t))

        if t == 0.0:
            verdicts["flat_multiplicity"] = report.spread >= 0.3
        if t == amplitudes[-1] and t > 0.0:
            oracle_loop, oracle_length = translate_oracle(metric, config.gamma, solver.n_vertices)
            near = loop_distance(best, oracle_loop)
            records.append({"kind": "oracle", "t": t, "oracle_length": oracle_length,
                            "distance_to_oracle": near, "oracle_position": list(mean_position(oracle_loop))})
            verdicts["unique_cluster"] = len(report.clusters) == 1 and report.spread <= 1e-2
            verdicts["near_oracle"] = near <= 0.02
            verdicts["oracle_length"] = abs(report.best_length - oracle_length) <= 5e-3 * oracle_length
    ordered = [spreads[t] for t in amplitudes if t in spreads]
    slack = SPREAD_SLACK_FRACTION * config.cluster_tol
    verdicts["spread_monotone"] = all(b <= a + slack for a, b in zip(ordered, ordered[1:]))
    return records, verdicts


def run_cs_property(config: ExperimentConfig) -> Outcome:
    records: List[dict] = []
    worst_gap: Dict[str, float] = {f: np.inf for f in METRIC_FAMILIES}
    worst_ratio: Dict[str, float] = {f: 0.0 for f in METRIC_FAMILIES}
    counts: Dict[str, int] = {f: 0 for f in METRIC_FAMILIES}
    classes = homotopy_classes(3.0)
    errors = 0
    for trial in range(config.trials):
        rng = np.random.default_rng([config.seed, trial])
        family = METRIC_FAMILIES[trial % len(METRIC_FAMILIES)]
        try:
            metric = random_metric(rng, family)
            winding = classes[int(rng.integers(len(classes)))]
            loop = random_loop(rng, winding, config.check_vertices)
            gap = cs_gap(metric, loop)
            resampled = reparametrize_constant_speed(metric, loop)
            ratio = cs_gap(metric, resampled) / action(metric, resampled)
        except LabError as e:
            records.append(_error_record(e, trial=trial))
            errors += 1
            continue
        counts[family] += 1
        worst_gap[family] = min(worst_gap[family], gap)
        worst_ratio[family] = max(worst_ratio[family], ratio)
    for family in METRIC_FAMILIES:
        records.append({"kind": "family", "family": family, "trials": counts[family],
                        "min_cs_gap": float(worst_gap[family]) if counts[family] else None,
                        "max_resampled_gap_ratio": worst_ratio[family]})
    verdicts = {
        "no_errors": errors == 0,
        "cs_gap_nonnegative": all(worst_gap[f] >= -1e-9 for f in METRIC_FAMILIES if counts[f]),
        "resampled_constant_speed": all(worst_ratio[f] <= 1e-6 for f in METRIC_FAMILIES),
    }
    return records, verdicts


def _solve_single(metric: FinslerMetric, winding: Tuple[int, int], solver: SolverConfig,
                  records: List[dict], label: str):
    try:
        result = shortest_loop(metric, winding, solver)
    except LabError as e:
        records.append(_error_record(e, case=label, winding=list(winding)))
        return None
    capped = verify_speed_cap(metric, result.loop, winding)
    records.append({
        "kind": "minimizer",
        "case": label,
        "winding": list(winding),
        "length": result.length,
        "converged": result.converged,
        "iterations": result.iterations,
        "speed_cap": capped,
    })
    return result


def run_speed_cap(config: ExperimentConfig) -> Outcome:
    solver = config.solver_config().model_copy(update={"jitter": min(config.jitter, 0.01)})
    records: List[dict] = []
    verdicts: Dict[str, bool] = {}
    caps: List[bool] = []

    flat = euclidean()
    for winding in ((1, 0), (1, 1), (2, 1), (3, 4)):
        result = _solve_single(flat, winding, solver, records, "flat")
        expected = float(np.hypot(*winding))
        verdicts[f"flat_{winding[0]}_{winding[1]}"] = (
            result is not None and result.converged and abs(result.length - expected) <= 5e-3 * expected
        )
        if result is not None and result.converged:
            caps.append(records[-1]["speed_cap"])

    beta = (0.3, 0.0)
    randers = randers_constant(beta)
    lengths = {}
    for winding, expected in (((1, 0), 1.3), ((-1, 0), 0.7)):
        result = _solve_single(randers, winding, solver, records, "randers")
        ok = result is not None and result.converged and abs(result.length - expected) <= 5e-3 * expected
        verdicts[f"randers_{winding[0]}_{winding[1]}"] = ok
        if result is not None:
            lengths[winding] = result.length
            if result.converged:
                caps.append(records[-1]["speed_cap"])
    if len(lengths) == 2:
        verdicts["randers_asymmetry"] = abs(lengths[(1, 0)] - lengths[(-1, 0)] - 2 * beta[0]) <= 1e-2
    else:
        verdicts["randers_asymmetry"] = False

    if config.amplitude > 0:
        # every cluster representative of the multi-start bump run
        conformal = conformal_scale(euclidean(), bump_factor(config.amplitude, config.bump_center))
        try:
            report = minimizer_set(conformal, config.gamma, config.solver_config())
        except LabError as e:
            records.append(_error_record(e, case="conformal", winding=list(config.gamma)))
            caps.append(False)
        else:
            for cluster in report.clusters:
                capped = verify_speed_cap(conformal, cluster.representative, config.gamma)
                records.append({"kind": "minimizer", "case": "conformal", "winding": list(config.gamma),
                                "length": cluster.length, "members": cluster.members, "speed_cap": capped})
                caps.append(capped)

    verdicts["speed_cap"] = bool(caps) and all(caps)
    return records, verdicts


def _trial_polytope(config: ExperimentConfig, rng: np.random.Generator) -> ConvexBody:
    if config.polytope_file:
        return load_polytope_csv(config.polytope_file)
    return random_polytope(rng, config.max_dimension, config.max_vertex_count)


def run_mane_polytope(config: ExperimentConfig) -> Outcome:
    records: List[dict] = []
    failures = 0
    checks = {"diameter": True, "neighborhood": True, "schedule": True, "oracle": True, "generic": True}
    for trial in range(config.trials):
        rng = np.random.default_rng([config.seed, trial])
        body = _trial_polytope(config, rng)
        f = load_functional_csv(config.functional_file) if config.functional_file else Functional.zero(body.dimension)
        diam_k = body.diameter()
        epsilon = config.epsilon * diam_k if diam_k > 0 else config.epsilon
        trial_seed = int(rng.integers(2 ** 31))
        try:
            result = lemma33_perturb(f, body, epsilon, config.delta, trial_seed)
        except LabError as e:
            records.append(_error_record(e, trial=trial))
            failures += 1
            continue

        change = (result.functional + (-1.0) * f).norm()
        t_max = config.delta / result.g.norm()
        exact = argmin_set(result.functional, body, tol=0.0)
        oracle_value, oracle_active = enumerate_minimizers(result.functional, body)
        base_exact = argmin_set(f, body, tol=0.0)
        _, base_oracle = enumerate_minimizers(f, body)
        agrees = exact.active_vertices == oracle_active and base_exact.active_vertices == base_oracle
        fraction = genericity_sweep(body, config.genericity_samples, 1e-6, trial_seed)

        checks["diameter"] &= result.diameter <= epsilon
        checks["neighborhood"] &= change <= config.delta * (1.0 + 1e-12)
        checks["schedule"] &= result.t <= t_max * (1.0 + 1e-12)
        checks["oracle"] &= agrees
        checks["generic"] &= fraction >= 0.99
        records.append({
            "kind": "trial",
            "trial": trial,
            "dimension": body.dimension,
            "vertex_count": len(body.vertices),
            "diam_k": diam_k,
            "epsilon": epsilon,
            "diam_before": result.base_diameter,
            "diam_after": result.diameter,
            "t": result.t,
            "t_max": t_max,
            "norm_change": change,
            "steps": len(result.steps),
            "oracle_agrees": agrees,
            "oracle_value": oracle_value,
            "generic_fraction": fraction,
            "in_level_set": level_membership(result.functional, body, config.level_n),
        })
    verdicts = {"all_succeeded": failures == 0, **checks}
    return records, verdicts


def run_semicontinuity(config: ExperimentConfig) -> Outcome:
    records: List[dict] = []
    totals = {"monotone": True, "diameter_violations": 0, "limit_point_violations": 0}
    scales = [2.0 ** (-k) for k in range(1, config.scale_count + 1)]
    for trial in range(config.trials):
        rng = np.random.default_rng([config.seed, trial])
        if config.polytope_file:
            body = load_polytope_csv(config.polytope_file)
        else:
            body = random_polytope(rng, config.max_dimension, config.max_vertex_count, integer=True)
        f = Functional(rng.integers(-2, 3, size=body.dimension).astype(float))
        direction = rng.standard_normal(body.dimension)
        g = Functional(direction / max(np.linalg.norm(direction), 1e-300))
        report = semicontinuity_probe(f, body, [g] * len(scales), scales,
                                      tail_start=min(config.tail_exponent, len(scales)) - 1)
        totals["monotone"] &= report.gaps_monotone
        totals["diameter_violations"] += report.diameter_violations
        totals["limit_point_violations"] += report.limit_point_violations
        records.append({
            "kind": "probe",
            "trial": trial,
            "dimension": body.dimension,
            "base_diameter": report.base_diameter,
            "max_tail_gap": report.max_tail_gap,
            "last_gap": report.value_gaps[-1],
            "gaps_monotone": report.gaps_monotone,
            "diameter_violations": report.diameter_violations,
            "limit_point_violations": report.limit_point_violations,
        })
    verdicts = {
        "gaps_monotone": totals["monotone"],
        "no_diameter_violations": totals["diameter_violations"] == 0,
        "no_limit_point_violations": totals["limit_point_violations"] == 0,
    }
    return records, verdicts


def finite_difference_gradient(metric: FinslerMetric, vertices: np.ndarray, winding: Tuple[int, int],
                               step: float) -> np.ndarray:
    base = np.array(vertices, dtype=float)
    fd = np.empty_like(base)
    for idx in np.ndindex(*base.shape):
        plus, minus = base.copy(), base.copy()
        plus[idx] += step
        minus[idx] -= step
        fd[idx] = (discrete_action(metric, plus, winding) - discrete_action(metric, minus, winding)) / (2.0 * step)
    return fd


def gradient_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    """Componentwise relative error, denominators floored at 1e-3 of the largest component."""
    floor = 1e-3 * float(np.max(np.abs(fd)))
    den = np.maximum(np.abs(fd), floor if floor > 0 else 1.0)
    return float(np.max(np.abs(analytic - fd) / den))


def run_gradient_check(config: ExperimentConfig) -> Outcome:
    records: List[dict] = []
    classes = homotopy_classes(2.0)
    worst = 0.0
    for trial in range(config.trials):
        rng = np.random.default_rng([config.seed, trial])
        family = METRIC_FAMILIES[trial % len(METRIC_FAMILIES)]
        metric = random_metric(rng, family)
        winding = classes[int(rng.integers(len(classes)))]
        loop = random_loop(rng, winding, config.check_vertices)
        _, analytic = action_gradient(metric, loop.vertices, winding)
        fd = finite_difference_gradient(metric, loop.vertices, winding, config.fd_step)
        error = gradient_error(analytic, fd)
        worst = max(worst, error)
        records.append({"kind": "gradient", "trial": trial, "family": family,
                        "winding": list(winding), "relative_error": error})
    return records, {"gradient_matches": worst <= config.gradient_rtol}


def run_consistency(config: ExperimentConfig) -> Outcome:
    records: List[dict] = []
    checks = {"gap_bound": True, "mass_identity": True, "constant_exact": True}
    classes = homotopy_classes(2.0)
    for trial in range(config.trials):
        rng = np.random.default_rng([config.seed, trial])
        family = METRIC_FAMILIES[trial % len(METRIC_FAMILIES)]
        metric = random_metric(rng, family)
        constant = trial % 10 == 0
        factor = ConformalFactor.constant(rng.uniform(0.5, 2.0)) if constant else random_factor(rng, 2, 0.05, 1.5)
        winding = classes[int(rng.integers(len(classes)))]
        if config.loop_file:
            loop = read_loop_csv(config.loop_file)
        else:
            loop = random_loop(rng, winding, config.check_vertices)
        grid = loop_pushforward(metric, loop, config.resolution)
        gap = action_consistency(metric, factor, loop, config.resolution)
        bound = consistency_bound(factor, grid)
        loop_action = action(metric, loop)
        mass_error = abs(grid.total_mass - loop_action)
        tol = 1e-12 * max(1.0, loop_action)
        checks["gap_bound"] &= gap <= bound + tol
        checks["mass_identity"] &= mass_error <= tol
        if constant:
            scaled = factor.constant_offset * loop_action
            checks["constant_exact"] &= gap <= 1e-12 * max(1.0, scaled)
        records.append({"kind": "consistency", "trial": trial, "family": family, "constant_factor": constant,
                        "gap": gap, "bound": bound, "mass_error": mass_error})

    factor = bump_factor(max(config.amplitude, 0.05), config.bump_center)
    pool = [straight_loop((1, 0), config.check_vertices, (0.0, 0.01 + k / config.pool_size))
            for k in range(config.pool_size)]
    transfer = minimizer_transfer(euclidean(), factor, pool, config.resolution)
    count = pool_argmin_count(euclidean(), factor, pool, config.resolution)
    records.append({"kind": "transfer", "pool_size": len(pool), "best_index": transfer.best_index,
                    "violations": transfer.violations, "strict_violations": transfer.strict_violations,
                    "pool_argmin_count": count})
    checks["minimizer_transfer"] = transfer.passed
    checks["unique_pool_minimizer"] = count == 1
    return records, checks


def run_multi_class(config: ExperimentConfig) -> Outcome:
    solver = config.solver_config()
    metric = build_metric(config)
    records: List[dict] = []
    solved = True
    capped = True
    for winding in homotopy_classes(config.max_class_norm):
        try:
            report = minimizer_set(metric, winding, solver)
        except LabError as e:
            records.append(_error_record(e, winding=list(winding)))
            solved = False
            continue
        records.append({"kind": "class", "winding": list(winding), "clusters": len(report.clusters),
                        "spread": report.spread, "best_length": report.best_length})
        records.extend(report_records(report))
        capped &= all(verify_speed_cap(metric, c.representative, winding) for c in report.clusters)
    return records, {"all_classes_solved": solved, "speed_cap": capped}


RUNNERS: Dict[str, Callable[[ExperimentConfig], Outcome]] = {
    "uniqueness": run_uniqueness,
    "cs-property": run_cs_property,
    "speed-cap": run_speed_cap,
    "mane-polytope": run_mane_polytope,
    "consistency": run_consistency,
    "semicontinuity": run_semicontinuity,
    "gradient-check": run_gradient_check,
    "multi-class": run_multi_class,
}


# ============================================================================
# REPORTS
# ============================================================================

def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, allow_nan=False, default=_json_default)


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"Not JSON serializable: {type(value).__name__}")


def report_path(config: ExperimentConfig) -> Path:
    if config.out:
        return Path(config.out)
    return Path(settings.REPORT_DIR) / f"{config.experiment}-seed{config.seed}.jsonl"


def run(config: ExperimentConfig) -> Tuple[int, Path]:
    """Run one experiment and write its JSON-lines report; status 0 iff every verdict passes."""
    logger.info(f"Starting experiment {config.experiment} (seed {config.seed})")
    records, verdicts = RUNNERS[config.experiment](config)
    passed = bool(verdicts) and all(verdicts.values())
    path = report_path(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        _dumps({"kind": "header", "timestamp": datetime.now(timezone.utc).isoformat()}),
        _dumps({"kind": "config", "config": config.model_dump(mode="json")}),
        *(_dumps(r) for r in records),
        _dumps({"kind": "summary", "experiment": config.experiment,
                "verdicts": {k: bool(v) for k, v in verdicts.items()}, "passed": passed}),
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    for name, ok in sorted(verdicts.items()):
        logger.info(f"{config.experiment}: {name} {'PASS' if ok else 'FAIL'}")
    logger.info(f"Report written to {path}")
    return (0 if passed else 1), path


def read_report(path: Union[str, Path]) -> List[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ReportFormatError(f"Cannot read report {path}: {e}")
    records = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ReportFormatError(f"{path}:{number}: invalid JSON ({e})")
        if not isinstance(record, dict) or "kind" not in record:
            raise ReportFormatError(f"{path}:{number}: expected an object with a 'kind' field")
        records.append(record)
    return records


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def emit_plot_data(report: Union[str, Path], out_dir: Union[str, Path]) -> List[Path]:
    """spread.csv (t, spread), mane_trials.csv (trial, diam_before, diam_after) and one CSV per dumped loop."""
    records = read_report(report)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        spread_rows = sorted((float(r["t"]), float(r["spread"])) for r in records
                             if r["kind"] == "run" and "spread" in r)
        trial_rows = [(int(r["trial"]), float(r["diam_before"]), float(r["diam_after"]))
                      for r in records if r["kind"] == "trial"]
        loops = [(r, DiscreteLoop(r["vertices"], tuple(r["winding"]))) for r in records if r["kind"] == "loop"]
    except (KeyError, TypeError, ValueError, LabError) as e:
        raise ReportFormatError(f"Malformed record in {report}: {e}")

    written = [
        _write_rows(out / "spread.csv", ["t", "spread"], spread_rows),
        _write_rows(out / "mane_trials.csv", ["trial", "diam_before", "diam_after"], trial_rows),
    ]
    for i, (record, loop) in enumerate(loops):
        tag = f"_t{record['t']}" if "t" in record else ""
        written.append(write_loop_csv(loop, out / f"loop_{i:03d}{tag}.csv"))
    logger.info(f"Wrote {len(written)} plot files to {out}")
    return written
