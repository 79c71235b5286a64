"""Batch experiment orchestration: replicated trials, summaries, CSV traces.

A run takes a config (YAML file or dict), executes ``trials`` isolated
solver runs (each with its own instance clone and derived random streams),
logs metrics at a geometric grid of oracle-query checkpoints, and writes
one trace CSV (a row per checkpoint per trial), one summary CSV (mean and
standard error over non-diverged trials per checkpoint), and an echo of the
fully resolved config sufficient to reproduce the run byte-for-byte.

For nonconvex runs the ``gap`` column carries the stationarity residual of
the outer iterates (the quantity the nonconvex theory controls) instead of
an optimality gap.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass

import numpy as np
import yaml

from .geometry import Box, EuclideanGeometry, domain_diameter
from .problem import NoiseModel, aggregate_constants, ledger_expected_calls
from .proximal import (
    ProximalConfig,
    default_regularization,
    proximal_point_solve,
    spectral_regularization,
)
from .qcqp import QcqpInstance, metrics, random_instance, reference_solve
from .smoothing import SmoothingConfig, select_smoothing_parameters
from .solver import StepSchedule, schedule_from_bounds, solve
from .streams import StreamSet

SEED_ENV_VAR = "ZOCONEX_SEED"

TRACE_HEADER = "trial,checkpoint_queries,gap,violation,dual_norm,diverged"
SUMMARY_HEADER = (
    "checkpoint_queries,mean_gap,stderr_gap,mean_violation,stderr_violation,"
    "n_trials,n_diverged"
)

_DEFAULTS = {
    "family": "qcqp-convex",
    "n": 10,
    "m": 2,
    "T": 5000,
    "K": 10,
    "trials": 5,
    "master_seed": 20260810,
    "shared_instance": False,
    "instance_seed": None,
    "checkpoints": 50,
    "x0": None,
    "regularization": "default",
    "kkt_snap_tol": 0.0,
    "noise": {"kind": "none", "sigma": 0.0, "dof": 5.0, "scale": 1.0, "common": False},
    "smoothing": {"mode": "theorem1"},
    "schedule": {"mode": "theorem1", "dual_norm_bound": 1.0},
    "output": {"prefix": "experiment"},
}

_FAMILIES = ("qcqp-convex", "qcqp-nonconvex", "custom-1d")


class ConfigError(ValueError):
    pass


def resolve_config(raw: dict) -> dict:
    """Apply defaults and validate; returns a plain, dumpable dict."""
    cfg = {}
    for key, default in _DEFAULTS.items():
        value = raw.get(key, default)
        if isinstance(default, dict) and isinstance(value, dict):
            merged = dict(default)
            merged.update(value)
            value = merged
        cfg[key] = value
    unknown = set(raw) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if cfg["family"] not in _FAMILIES:
        raise ConfigError(f"family must be one of {_FAMILIES}, got {cfg['family']!r}")
    if int(cfg["trials"]) < 1:
        raise ConfigError("trials must be >= 1")
    if int(cfg["T"]) < 1:
        raise ConfigError("T must be >= 1")
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        cfg["master_seed"] = int(env_seed)
    if cfg["family"] == "custom-1d":
        cfg["n"], cfg["m"] = 1, 1
    _noise_model(cfg["noise"])  # fail fast on bad noise specs
    return cfg


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        return resolve_config(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _noise_model(spec: dict) -> NoiseModel:
    try:
        return NoiseModel(
            kind=spec.get("kind", "none"),
            sigma=float(spec.get("sigma", 0.0)),
            dof=float(spec.get("dof", 5.0)),
            scale=float(spec.get("scale", 1.0)),
            common=bool(spec.get("common", False)),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"noise: {exc}") from exc


# ---------------------------------------------------------------------------
# instances and per-trial execution
# ---------------------------------------------------------------------------


def _instance_for_trial(cfg: dict, trial: int) -> QcqpInstance:
    family = cfg["family"]
    if family == "custom-1d":
        return _one_dimensional_instance()
    base = cfg["instance_seed"]
    base = cfg["master_seed"] if base is None else int(base)
    seed = base if cfg["shared_instance"] else base + trial
    return random_instance(
        int(cfg["n"]), int(cfg["m"]), convex=(family == "qcqp-convex"), seed=seed
    )


def _one_dimensional_instance() -> QcqpInstance:
    # minimize x on [0, 1] subject to 0.5 - x <= 0; optimum x* = 0.5, y* = 1
    A = np.zeros((2, 1, 1))
    b = np.array([[1.0], [-1.0]])
    c = np.array([0.0, 0.5])
    return QcqpInstance(A=A, b=b, c=c, convex=True, domain=Box([0.0], [1.0]))


def _smoothing_for(cfg: dict, instance: QcqpInstance, nu_override=None) -> SmoothingConfig:
    m = instance.m
    if nu_override is not None:
        return SmoothingConfig.uniform(float(nu_override), m)
    spec = cfg["smoothing"]
    if "nu" in spec and spec.get("mode", "explicit") != "theorem1":
        nu = spec["nu"]
        if isinstance(nu, (int, float)):
            return SmoothingConfig.uniform(float(nu), m)
        return SmoothingConfig(nu0=float(spec.get("nu0", nu[0])), nu=np.asarray(nu, dtype=float))
    constants = instance.constants(_noise_model(cfg["noise"]))
    _, m_x = domain_diameter(EuclideanGeometry(), instance.domain)
    return select_smoothing_parameters(constants, instance.n, m, int(cfg["T"]), m_x)


def _schedule_for(cfg: dict, instance: QcqpInstance, config: SmoothingConfig) -> StepSchedule:
    spec = cfg["schedule"]
    constants = instance.constants(_noise_model(cfg["noise"]))
    if spec.get("mode", "theorem1") == "explicit":
        _, l_f = aggregate_constants(constants)
        return StepSchedule(
            T=int(cfg["T"]),
            eta_t=float(constants.L[0]) + l_f + float(spec["eta"]),
            tau_t=float(spec["tau"]),
        )
    d_x, _ = domain_diameter(EuclideanGeometry(), instance.domain)
    return schedule_from_bounds(
        constants,
        config,
        instance.n,
        d_x,
        int(cfg["T"]),
        float(spec.get("dual_norm_bound", 1.0)),
    )


@dataclass
class TrialRecord:
    """Step-function metric curves of one trial, keyed by query count."""

    queries: np.ndarray
    gap: np.ndarray
    violation: np.ndarray
    dual_norm: np.ndarray
    diverged_from: int | None  # index into the curve, None if clean


def run_trial(cfg: dict, trial: int, nu_override=None, schedule_nu=None) -> TrialRecord:
    """Execute one fully isolated trial and return its metric curves.

    ``nu_override`` replaces the configured smoothing radii (sweep mode);
    ``schedule_nu`` pins the radii a derived schedule is resolved at, so a
    sweep can vary the estimator while holding the step sizes fixed.
    """
    instance = _instance_for_trial(cfg, trial)
    reference = reference_solve(instance)
    if not reference.solved:
        raise RuntimeError(f"trial {trial}: reference solve failed")
    noise = _noise_model(cfg["noise"])
    problem = instance.problem(noise)
    config = _smoothing_for(cfg, instance, nu_override)
    streams = StreamSet(int(cfg["master_seed"])).child(trial)
    x0 = None if cfg.get("x0") is None else np.asarray(cfg["x0"], dtype=float)

    if cfg["family"] == "qcqp-nonconvex":
        return _nonconvex_trial(cfg, instance, problem, config, streams, x0)

    schedule_config = config if schedule_nu is None else _smoothing_for(
        cfg, instance, schedule_nu
    )
    schedule = _schedule_for(cfg, instance, schedule_config)
    _, trace = solve(problem, schedule, config, streams, x0=x0)
    gap = trace.objective - reference.f0_star
    diverged_from = trace.diverged_at
    return TrialRecord(
        queries=trace.oracle_calls.astype(np.int64),
        gap=gap,
        violation=trace.violation,
        dual_norm=trace.dual_norm,
        diverged_from=diverged_from,
    )


def _nonconvex_trial(cfg, instance, problem, config, streams, x0) -> TrialRecord:
    spec = cfg["schedule"]
    if cfg.get("regularization", "default") == "spectral":
        mu0, mu = spectral_regularization(instance.min_eigenvalues())
    else:
        mu0, mu = default_regularization(problem.constants)
    explicit = spec.get("mode", "theorem1") == "explicit"
    prox_cfg = ProximalConfig(
        mu0=mu0,
        mu=mu,
        outer_steps=int(cfg["K"]),
        inner_T=int(cfg["T"]),
        inner_eta=float(spec["eta"]) if explicit else None,
        inner_tau=float(spec["tau"]) if explicit else None,
        inner_eta_growth=float(spec.get("eta_growth", 1.0)),
        dual_norm_bound=float(spec.get("dual_norm_bound", 1.0)),
        kkt_snap_tol=float(cfg.get("kkt_snap_tol", 0.0)),
    )
    result = proximal_point_solve(problem, prox_cfg, config, streams, x0=x0)
    per_step = ledger_expected_calls(problem.constraint_count, prox_cfg.inner_T)
    queries = np.array(
        [per_step * (k + 1) for k in range(len(result.iterates))], dtype=np.int64
    )
    stationarity = np.array([r.stationarity for r in result.nearby_reports])
    violation = np.array([r.violation for r in result.reports])
    dual_norm = np.array([np.linalg.norm(r.dual) for r in result.reports])
    diverged_from = len(result.iterates) - 1 if result.diverged else None
    return TrialRecord(
        queries=queries,
        gap=stationarity,
        violation=violation,
        dual_norm=dual_norm,
        diverged_from=diverged_from,
    )


# ---------------------------------------------------------------------------
# checkpoints and summaries
# ---------------------------------------------------------------------------


def checkpoint_grid(first: int, last: int, count: int) -> np.ndarray:
    """Strictly increasing geometric grid of query counts."""
    if last < first:
        raise ValueError("empty query range")
    grid = np.unique(
        np.round(np.geomspace(max(first, 1), max(last, 1), num=count)).astype(np.int64)
    )
    return grid


def sample_at_checkpoints(record: TrialRecord, grid: np.ndarray):
    """Latest record at or before each checkpoint (step-function sampling)."""
    idx = np.searchsorted(record.queries, grid, side="right") - 1
    idx = np.clip(idx, 0, record.queries.size - 1)
    gap = record.gap[idx]
    violation = record.violation[idx]
    dual = record.dual_norm[idx]
    if record.diverged_from is None:
        diverged = np.zeros(grid.size, dtype=bool)
    else:
        diverged = idx >= record.diverged_from
    return gap, violation, dual, diverged


@dataclass
class SummaryRow:
    checkpoint_queries: int
    mean_gap: float
    stderr_gap: float
    mean_violation: float
    stderr_violation: float
    n_trials: int
    n_diverged: int


def summarize(grid: np.ndarray, sampled: list) -> list[SummaryRow]:
    """Mean and standard error per checkpoint over non-diverged trials.

    A trial counts as diverged at a checkpoint when its divergence flag is
    set there or its metric is NaN; such trials are excluded from the
    moments and reported in ``n_diverged``.
    """
    if not sampled:
        raise ValueError("need at least one trace")
    rows = []
    for j, q in enumerate(grid):
        gaps, violations = [], []
        n_diverged = 0
        for gap, violation, _dual, diverged in sampled:
            bad = bool(diverged[j]) or not np.isfinite(gap[j]) or not np.isfinite(violation[j])
            if bad:
                n_diverged += 1
            else:
                gaps.append(float(gap[j]))
                violations.append(float(violation[j]))
        k = len(gaps)
        if k == 0:
            mg = sg = mv = sv = float("nan")
        else:
            mg = float(np.mean(gaps))
            mv = float(np.mean(violations))
            sg = float(np.std(gaps, ddof=1) / np.sqrt(k)) if k > 1 else 0.0
            sv = float(np.std(violations, ddof=1) / np.sqrt(k)) if k > 1 else 0.0
        rows.append(
            SummaryRow(
                checkpoint_queries=int(q),
                mean_gap=mg,
                stderr_gap=sg,
                mean_violation=mv,
                stderr_violation=sv,
                n_trials=k,
                n_diverged=n_diverged,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _g17(x: float) -> str:
    return format(float(x), ".17g")


def write_trace_csv(path: str, grid: np.ndarray, sampled: list) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRACE_HEADER + "\n")
        for trial, (gap, violation, dual, diverged) in enumerate(sampled):
            for j, q in enumerate(grid):
                fh.write(
                    f"{trial},{int(q)},{_g17(gap[j])},{_g17(violation[j])},"
                    f"{_g17(dual[j])},{int(diverged[j])}\n"
                )


def write_summary_csv(path: str, rows: list[SummaryRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.checkpoint_queries},{_g17(r.mean_gap)},{_g17(r.stderr_gap)},"
                f"{_g17(r.mean_violation)},{_g17(r.stderr_violation)},"
                f"{r.n_trials},{r.n_diverged}\n"
            )


def read_trace_csv(path: str):
    """Parse an emitted trace back into per-trial arrays (round-trip exact)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header!r}")
        by_trial: dict[int, list] = {}
        for line in fh:
            t, q, gap, violation, dual, diverged = line.strip().split(",")
            by_trial.setdefault(int(t), []).append(
                (int(q), float(gap), float(violation), float(dual), bool(int(diverged)))
            )
    return by_trial


# ---------------------------------------------------------------------------
# the experiment driver
# ---------------------------------------------------------------------------


def _trial_worker(args):
    cfg, trial, nu_override, schedule_nu = args
    record = run_trial(cfg, trial, nu_override, schedule_nu)
    return trial, record


@dataclass
class ExperimentResult:
    out_dir: str
    trace_paths: list
    summary_paths: list
    summaries: dict
    ok: bool


def run_experiment(cfg: dict, out_dir: str, jobs: int = 1) -> ExperimentResult:
    """Run every trial (optionally in parallel), write CSVs and config echo.

    Sweep configs (``smoothing: {sweep: [...]}``) produce one trace/summary
    pair per smoothing value, with the step schedule resolved once at the
    smallest swept value and held fixed so runs differ only in the radii.
    """
    cfg = resolve_config(dict(cfg))
    os.makedirs(out_dir, exist_ok=True)
    sweep = cfg["smoothing"].get("sweep")
    nu_values = [None] if sweep is None else [float(v) for v in sweep]

    echo_path = os.path.join(out_dir, "config_resolved.yaml")
    with open(echo_path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)

    schedule_nu = None if sweep is None else min(nu_values)
    trace_paths, summary_paths, summaries = [], [], {}
    for nu_override in nu_values:
        tag = "" if nu_override is None else f"_nu{nu_override:g}"
        tasks = [
            (cfg, trial, nu_override, schedule_nu) for trial in range(int(cfg["trials"]))
        ]
        if jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_trial_worker, tasks))
        else:
            results = [_trial_worker(t) for t in tasks]
        results.sort(key=lambda pair: pair[0])
        records = [rec for _, rec in results]

        first = int(min(rec.queries[0] for rec in records))
        last = int(max(rec.queries[-1] for rec in records))
        grid = checkpoint_grid(first, last, int(cfg["checkpoints"]))
        sampled = [sample_at_checkpoints(rec, grid) for rec in records]

        trace_path = os.path.join(out_dir, f"trace{tag}.csv")
        summary_path = os.path.join(out_dir, f"summary{tag}.csv")
        write_trace_csv(trace_path, grid, sampled)
        rows = summarize(grid, sampled)
        write_summary_csv(summary_path, rows)
        trace_paths.append(trace_path)
        summary_paths.append(summary_path)
        summaries[nu_override if nu_override is not None else "default"] = rows

    return ExperimentResult(
        out_dir=out_dir,
        trace_paths=trace_paths,
        summary_paths=summary_paths,
        summaries=summaries,
        ok=True,
    )
