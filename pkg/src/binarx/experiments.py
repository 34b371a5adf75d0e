"""Simulation-study harnesses: consistency, normality, size, and power.

Every harness is deterministic given its master seed.  Replication streams
are derived as SeedSequence((master_seed, kind, m_index, rep)) with kind
0=consistency, 1=normality, 2=size, 4=power; the shared auxiliary series that
pins the monitoring metric uses (master_seed, 3, 0), and internally computed
threshold tables use the calibration module's (master_seed, rep) streams.
Workers never share generator state, so thread counts change only wall time.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .calibration import CalibrationConfig, ThresholdTable, threshold_table
from .defaults import DEFAULT_BURN_IN, DEFAULT_SEED, default_model_spec
from .estimation import fit_mple
from .exceptions import BinarxError
from .model import ModelSpec, ParamVector, SeriesSample, simulate_chain
from .monitoring import weight
from ._parallel import map_over_reps

_KIND_CONSISTENCY = 0
_KIND_NORMALITY = 1
_KIND_SIZE = 2
_KIND_AUX = 3
_KIND_POWER = 4


@dataclass(frozen=True)
class ChangePoint:
    """A coefficient switch at monitored index at_k (the first changed point)."""

    at_k: int
    new_beta: ParamVector

    def __post_init__(self):
        if self.at_k < 1:
            raise ValueError("change point index at_k must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    spec: ModelSpec = field(default_factory=default_model_spec)
    m_list: tuple[int, ...] = (500, 1000, 1500)
    reps: int = 100
    gammas: tuple[float, ...] = (0.0, 0.25, 0.4)
    alphas: tuple[float, ...] = (0.1, 0.05, 0.025, 0.01)
    horizon: float = 3.0
    change: ChangePoint | None = None
    master_seed: int = DEFAULT_SEED
    burn_in: int = DEFAULT_BURN_IN
    a_source: str = "aux"
    aux_length: int = 10_000
    calibration_reps: int = 10_000
    calibration_grid: int = 1000
    thresholds: ThresholdTable | None = None
    emit_traces: int = 0

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.m_list:
            raise ValueError("m_list must not be empty")
        if self.a_source not in ("aux", "training"):
            raise ValueError(f"a_source must be 'aux' or 'training', got {self.a_source!r}")
        if self.change is not None and self.change.new_beta.dim != self.spec.beta.dim:
            raise ValueError("change.new_beta dimension must match the model")


def _param_names(dim: int) -> list[str]:
    return ["phi0", "phi1"] + [f"gamma{i + 1}" for i in range(dim - 2)]


def _rep_rng(master_seed: int, kind: int, m_index: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, kind, m_index, rep)))


def _burned_start(spec: ModelSpec, burn_in: int, rng: np.random.Generator) -> int:
    x0 = int(rng.binomial(spec.n, 0.5))
    if burn_in:
        xb, _ = simulate_chain(spec, burn_in, rng, x0)
        x0 = int(xb[-1])
    return x0


# ---------------------------------------------------------------------------
# Consistency and normality

@dataclass(frozen=True)
class _FitTask:
    spec: ModelSpec
    m: int
    burn_in: int
    master_seed: int
    kind: int
    m_index: int


def _fit_rep(task: _FitTask, rep: int):
    rng = _rep_rng(task.master_seed, task.kind, task.m_index, rep)
    x0 = _burned_start(task.spec, task.burn_in, rng)
    x, w = simulate_chain(task.spec, task.m, rng, x0)
    try:
        fit = fit_mple(SeriesSample(x=x, w=w), task.spec.n)
    except BinarxError:
        return None
    return fit.beta_hat.as_array()


@dataclass(frozen=True)
class ConsistencyReport:
    rows: tuple  # (m, mse vector, reps_used, failures, flagged)
    param_names: tuple[str, ...]
    master_seed: int
    reps: int

    def metadata(self) -> dict:
        return {
            "experiment": "consistency",
            "master_seed": self.master_seed,
            "reps": self.reps,
            "m_list": [int(m) for m, *_ in self.rows],
            "failures": {str(m): int(f) for m, _, _, f, _ in self.rows},
        }


def run_consistency(config: ExperimentConfig, threads: int = 1) -> ConsistencyReport:
    """Per-coordinate mean squared error of the MPLE for each training length."""
    beta0 = config.spec.beta.as_array()
    rows = []
    for mi, m in enumerate(config.m_list):
        task = _FitTask(config.spec, m, config.burn_in, config.master_seed, _KIND_CONSISTENCY, mi)
        results = map_over_reps(_fit_rep, task, config.reps, threads)
        ok = [r for r in results if r is not None]
        failures = config.reps - len(ok)
        if not ok:
            raise BinarxError(f"all {config.reps} fits failed at m={m}")
        errs = np.vstack(ok) - beta0
        mse = (errs**2).mean(axis=0)
        rows.append((m, mse, len(ok), failures, failures > 0.01 * config.reps))
    return ConsistencyReport(
        rows=tuple(rows),
        param_names=tuple(_param_names(config.spec.beta.dim)),
        master_seed=config.master_seed,
        reps=config.reps,
    )


@dataclass(frozen=True)
class NormalityReport:
    m: int
    estimates: np.ndarray
    mean: np.ndarray
    bias: np.ndarray
    skew_z: np.ndarray
    skew_p: np.ndarray
    kurt_z: np.ndarray
    kurt_p: np.ndarray
    qq_corr: np.ndarray
    insufficient_sample: bool
    failures: int
    param_names: tuple[str, ...]
    master_seed: int

    def metadata(self) -> dict:
        return {
            "experiment": "normality",
            "master_seed": self.master_seed,
            "m": self.m,
            "reps_used": int(self.estimates.shape[0]),
            "failures": self.failures,
            "insufficient_sample": self.insufficient_sample,
        }


def _two_sided_normal_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def run_normality(config: ExperimentConfig, threads: int = 1) -> NormalityReport:
    """Mean of the MPLE plus per-coordinate normality diagnostics.

    Runs at a single training length (m_list must have one entry).
    Diagnostics are large-sample z-tests on skewness and excess kurtosis and
    the correlation of the standardized order statistics with normal
    quantiles.  The raw estimate matrix is part of the report so any external
    multivariate test can be applied to it.  Fewer than 20 usable fits flags
    the sample as insufficient and skips the diagnostics.
    """
    if len(config.m_list) != 1:
        raise ValueError("run_normality uses a single training length")
    m = config.m_list[0]
    task = _FitTask(config.spec, m, config.burn_in, config.master_seed, _KIND_NORMALITY, 0)
    results = map_over_reps(_fit_rep, task, config.reps, threads)
    ok = [r for r in results if r is not None]
    failures = config.reps - len(ok)
    if not ok:
        raise BinarxError(f"all {config.reps} fits failed at m={m}")
    B = np.vstack(ok)
    reps_ok, d = B.shape
    mean = B.mean(axis=0)
    bias = mean - config.spec.beta.as_array()
    insufficient = reps_ok < 20
    nanvec = np.full(d, np.nan)
    if insufficient:
        skew_z = skew_p = kurt_z = kurt_p = qq = nanvec
    else:
        centered = B - mean
        m2 = (centered**2).mean(axis=0)
        m3 = (centered**3).mean(axis=0)
        m4 = (centered**4).mean(axis=0)
        skew = m3 / m2**1.5
        ex_kurt = m4 / m2**2 - 3.0
        skew_z = skew / math.sqrt(6.0 / reps_ok)
        kurt_z = ex_kurt / math.sqrt(24.0 / reps_ok)
        skew_p = np.array([_two_sided_normal_p(z) for z in skew_z])
        kurt_p = np.array([_two_sided_normal_p(z) for z in kurt_z])
        probs = (np.arange(1, reps_ok + 1) - 0.375) / (reps_ok + 0.25)
        quantiles = norm.ppf(probs)
        qq = np.array(
            [np.corrcoef(np.sort(centered[:, j]) / math.sqrt(m2[j]), quantiles)[0, 1] for j in range(d)]
        )
    return NormalityReport(
        m=m,
        estimates=B,
        mean=mean,
        bias=bias,
        skew_z=skew_z,
        skew_p=skew_p,
        kurt_z=kurt_z,
        kurt_p=kurt_p,
        qq_corr=qq,
        insufficient_sample=insufficient,
        failures=failures,
        param_names=tuple(_param_names(d)),
        master_seed=config.master_seed,
    )


# ---------------------------------------------------------------------------
# Monitoring experiments (size and power)

@dataclass(frozen=True)
class _MonitorTask:
    spec: ModelSpec
    m: int
    horizon_steps: int
    burn_in: int
    master_seed: int
    kind: int
    m_index: int
    gammas: tuple[float, ...]
    a_matrix: np.ndarray | None  # None means per-replication training metric
    change: ChangePoint | None
    keep_path: int  # reps below this index also return their statistic paths
    passage_thresholds: tuple[float, ...] | None = None  # per gamma, for first-passage


def _simulate_monitor_stream(task: _MonitorTask, rng: np.random.Generator):
    """Full path of m + horizon transitions, with the change injected if any."""
    spec = task.spec
    x0 = _burned_start(spec, task.burn_in, rng)
    total = task.m + task.horizon_steps
    if task.change is None:
        return simulate_chain(spec, total, rng, x0)
    pre = task.m + task.change.at_k - 1
    x1, w1 = simulate_chain(spec, pre, rng, x0)
    changed = ModelSpec(n=spec.n, beta=task.change.new_beta, exo=spec.exo)
    x2, w2 = simulate_chain(changed, total - pre, rng, int(x1[-1]))
    return np.concatenate([x1, x2[1:]]), np.vstack([w1, w2])


def _monitor_rep(task: _MonitorTask, rep: int):
    """One monitored replication.

    Returns (sups per gamma, statistic paths per gamma or None, drift vector
    or None, first-passage indices per gamma or None); None altogether when
    the training fit fails.  First-passage index 0 encodes "no alarm".  The
    statistic paths use the same arithmetic as the streaming monitor.
    """
    rng = _rep_rng(task.master_seed, task.kind, task.m_index, rep)
    x, w = _simulate_monitor_stream(task, rng)
    m, H = task.m, task.horizon_steps
    try:
        fit = fit_mple(SeriesSample(x=x[: m + 1], w=w[:m]), task.spec.n)
    except BinarxError:
        return None
    if task.a_matrix is not None:
        A = task.a_matrix
    else:
        A = np.linalg.inv(fit.sigma0_hat)
        A = 0.5 * (A + A.T)
    beta = fit.beta_hat.as_array()
    Z = np.empty((H, beta.size))
    Z[:, 0] = 1.0
    Z[:, 1] = x[m : m + H]
    Z[:, 2:] = w[m : m + H]
    G = Z * (x[m + 1 :] - task.spec.n * expit(Z @ beta))[:, None]
    S = np.cumsum(G, axis=0)
    q = ((S @ A) * S).sum(axis=1)
    kk = np.arange(1, H + 1)
    paths = []
    sups = np.empty(len(task.gammas))
    passages = None if task.passage_thresholds is None else np.zeros(len(task.gammas), dtype=int)
    for j, g in enumerate(task.gammas):
        stats = weight(m, kk, g) ** 2 * q
        sups[j] = stats.max()
        if passages is not None:
            hits = np.nonzero(stats >= task.passage_thresholds[j])[0]
            passages[j] = hits[0] + 1 if hits.size else 0
        if rep < task.keep_path:
            paths.append(stats)
    drift = None
    if task.change is not None:
        k_star = task.change.at_k
        tail = S[-1] - (S[k_star - 2] if k_star >= 2 else 0.0)
        drift = tail / (H - k_star + 1)
    return sups, (paths if rep < task.keep_path else None), drift, passages


def _aux_metric(config: ExperimentConfig) -> np.ndarray:
    """Metric A = inverse outer-product score covariance from one long series."""
    rng = np.random.default_rng(
        np.random.SeedSequence((config.master_seed, _KIND_AUX, 0))
    )
    x0 = _burned_start(config.spec, config.burn_in, rng)
    x, w = simulate_chain(config.spec, config.aux_length, rng, x0)
    fit = fit_mple(SeriesSample(x=x, w=w), config.spec.n)
    A = np.linalg.inv(fit.sigma0_hat)
    return 0.5 * (A + A.T)


def _resolve_thresholds(config: ExperimentConfig, threads: int) -> ThresholdTable:
    if config.thresholds is not None:
        return config.thresholds
    calib = CalibrationConfig(
        dim=config.spec.beta.dim,
        horizon=config.horizon,
        grid_m=config.calibration_grid,
        reps=config.calibration_reps,
        gammas=config.gammas,
        alphas=config.alphas,
        master_seed=config.master_seed,
    )
    return threshold_table(calib, threads)


@dataclass(frozen=True)
class SizeReport:
    rows: tuple  # (m, gamma, alpha, threshold_c, rate, rejections, reps_used, failures, flagged)
    traces: tuple
    master_seed: int
    reps: int

    def metadata(self) -> dict:
        return {
            "experiment": "size",
            "master_seed": self.master_seed,
            "reps": self.reps,
            "cells": len(self.rows),
        }


def run_size(config: ExperimentConfig, threads: int = 1) -> SizeReport:
    """No-change rejection frequency per (m, gamma, alpha).

    Every replication simulates a clean training stretch plus the monitored
    horizon, refits, and records whether the weighted statistic ever exceeds
    the calibrated critical value.  All gammas and alphas are evaluated on
    common replication streams.
    """
    table = _resolve_thresholds(config, threads)
    a_common = _aux_metric(config) if config.a_source == "aux" else None
    rows = []
    traces = []
    for mi, m in enumerate(config.m_list):
        task = _MonitorTask(
            spec=config.spec,
            m=m,
            horizon_steps=int(np.floor(config.horizon * m + 1e-9)),
            burn_in=config.burn_in,
            master_seed=config.master_seed,
            kind=_KIND_SIZE,
            m_index=mi,
            gammas=config.gammas,
            a_matrix=a_common,
            change=None,
            keep_path=config.emit_traces,
        )
        results = map_over_reps(_monitor_rep, task, config.reps, threads)
        ok = [r for r in results if r is not None]
        failures = config.reps - len(ok)
        if not ok:
            raise BinarxError(f"all {config.reps} monitored fits failed at m={m}")
        sups = np.vstack([r[0] for r in ok])
        flagged = failures > 0.01 * config.reps
        for j, g in enumerate(config.gammas):
            for a in config.alphas:
                c = table.lookup(g, a)
                n_reject = int((sups[:, j] >= c).sum())
                rows.append(
                    (m, g, a, c, n_reject / len(ok), n_reject, len(ok), failures, flagged)
                )
        for rep, r in enumerate(results[: config.emit_traces]):
            if r is None or r[1] is None:
                continue
            for j, g in enumerate(config.gammas):
                traces.append((m, g, rep, r[1][j]))
    return SizeReport(
        rows=tuple(rows), traces=tuple(traces), master_seed=config.master_seed, reps=config.reps
    )


@dataclass(frozen=True)
class PowerReport:
    rows: tuple  # (m, gamma, alpha, threshold_c, detection_rate, mean_k, median_k,
    #               reps_used, failures, flagged, drift vector)
    traces: tuple
    change_at: int
    master_seed: int
    reps: int
    param_names: tuple[str, ...]
    delays: dict  # (m, gamma) -> np.ndarray of detection indices (detected reps only)

    def metadata(self) -> dict:
        return {
            "experiment": "power",
            "master_seed": self.master_seed,
            "reps": self.reps,
            "change_at": self.change_at,
            "cells": len(self.rows),
        }


def run_power(config: ExperimentConfig, threads: int = 1) -> PowerReport:
    """Detection rate and first-passage delay under a coefficient change.

    The change is injected at monitored index `change.at_k`; the alarm level
    is the first entry of config.alphas.  The report also carries the
    post-change empirical score drift: the average of the score terms over
    the monitored points from the change onward, a direct estimate of the
    signal the statistic accumulates.
    """
    if config.change is None:
        raise ValueError("run_power requires config.change")
    alpha = config.alphas[0]
    table = _resolve_thresholds(config, threads)
    a_common = _aux_metric(config) if config.a_source == "aux" else None
    rows = []
    traces = []
    delays_map = {}
    thresholds = tuple(table.lookup(g, alpha) for g in config.gammas)
    for mi, m in enumerate(config.m_list):
        H = int(np.floor(config.horizon * m + 1e-9))
        if config.change.at_k > H:
            raise ValueError(f"change at_k={config.change.at_k} beyond horizon {H}")
        task = _MonitorTask(
            spec=config.spec,
            m=m,
            horizon_steps=H,
            burn_in=config.burn_in,
            master_seed=config.master_seed,
            kind=_KIND_POWER,
            m_index=mi,
            gammas=config.gammas,
            a_matrix=a_common,
            change=config.change,
            keep_path=config.emit_traces,
            passage_thresholds=thresholds,
        )
        results = map_over_reps(_monitor_rep, task, config.reps, threads)
        ok = [r for r in results if r is not None]
        failures = config.reps - len(ok)
        if not ok:
            raise BinarxError(f"all {config.reps} monitored fits failed at m={m}")
        flagged = failures > 0.01 * config.reps
        drift = np.vstack([r[2] for r in ok]).mean(axis=0)
        passages = np.vstack([r[3] for r in ok])
        for j, g in enumerate(config.gammas):
            delays = passages[passages[:, j] > 0, j].astype(float)
            rate = delays.size / len(ok)
            mean_k = float(np.mean(delays)) if delays.size else float("nan")
            median_k = float(np.median(delays)) if delays.size else float("nan")
            rows.append(
                (m, g, alpha, thresholds[j], rate, mean_k, median_k, len(ok), failures,
                 flagged, drift)
            )
            delays_map[(m, g)] = delays
        for rep, r in enumerate(results[: config.emit_traces]):
            if r is None or r[1] is None:
                continue
            for j, g in enumerate(config.gammas):
                traces.append((m, g, rep, r[1][j]))
    return PowerReport(
        rows=tuple(rows),
        traces=tuple(traces),
        change_at=config.change.at_k,
        master_seed=config.master_seed,
        reps=config.reps,
        param_names=tuple(_param_names(config.spec.beta.dim)),
        delays=delays_map,
    )


# ---------------------------------------------------------------------------
# CSV emission

def write_consistency_csv(report: ConsistencyReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "param", "mse", "reps_used", "failures", "flagged"])
        for m, mse, used, failures, flagged in report.rows:
            for name, value in zip(report.param_names, mse):
                writer.writerow([m, name, repr(float(value)), used, failures, flagged])


def write_normality_csv(report: NormalityReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["param", "mean", "bias", "skew_z", "skew_p", "kurt_z", "kurt_p", "qq_corr"]
        )
        for j, name in enumerate(report.param_names):
            writer.writerow(
                [
                    name,
                    repr(float(report.mean[j])),
                    repr(float(report.bias[j])),
                    repr(float(report.skew_z[j])),
                    repr(float(report.skew_p[j])),
                    repr(float(report.kurt_z[j])),
                    repr(float(report.kurt_p[j])),
                    repr(float(report.qq_corr[j])),
                ]
            )


def write_estimates_csv(report: NormalityReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(report.param_names)
        for row in report.estimates:
            writer.writerow([repr(float(v)) for v in row])


def write_size_csv(report: SizeReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "m",
                "gamma",
                "alpha",
                "threshold_c",
                "rejection_rate",
                "rejections",
                "reps_used",
                "failures",
                "flagged",
            ]
        )
        for m, g, a, c, rate, nrej, used, failures, flagged in report.rows:
            writer.writerow(
                [m, repr(float(g)), repr(float(a)), repr(float(c)), repr(float(rate)),
                 nrej, used, failures, flagged]
            )


def write_power_csv(report: PowerReport, path) -> None:
    drift_cols = [f"drift_{name}" for name in report.param_names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "m",
                "gamma",
                "alpha",
                "threshold_c",
                "detection_rate",
                "mean_detect_k",
                "median_detect_k",
                "reps_used",
                "failures",
                "flagged",
            ]
            + drift_cols
        )
        for m, g, a, c, rate, mean_k, median_k, used, failures, flagged, drift in report.rows:
            writer.writerow(
                [m, repr(float(g)), repr(float(a)), repr(float(c)), repr(float(rate)),
                 repr(mean_k), repr(median_k), used, failures, flagged]
                + [repr(float(v)) for v in drift]
            )


def write_traces_csv(traces, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "gamma", "rep", "k", "statistic"])
        for m, g, rep, stats in traces:
            for k, value in enumerate(stats, start=1):
                writer.writerow([m, repr(float(g)), rep, k, repr(float(value))])


def write_metadata_json(report, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.metadata(), fh, indent=2, sort_keys=True)
        fh.write("\n")
