"""JSON config loading shared by every CLI subcommand.

One documented schema covers all subcommands; each reads only its own
section plus the shared `model`, `seed`, and `threads` keys.  Relative file
paths inside a config resolve against the config file's directory.
Environment variables BINARX_SEED and BINARX_THREADS override the config;
command-line flags override both.
"""

from __future__ import annotations

import datetime
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .calibration import CalibrationConfig, read_threshold_table
from .defaults import DEFAULT_BURN_IN, DEFAULT_SEED, default_model_spec
from .exceptions import ConfigError
from .experiments import ChangePoint, ExperimentConfig
from .model import ExogenousSpec, ModelSpec, ParamVector

# Desk-scale replication defaults per experiment kind.
_EXPERIMENT_REPS = {"consistency": 100, "normality": 1000, "size": 1000, "power": 500}


@dataclass(frozen=True)
class LoadedConfig:
    raw: dict
    base_dir: Path
    seed: int
    threads: int


def load_config(path, seed_override=None, threads_override=None) -> LoadedConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "top level must be a JSON object")

    seed = _opt_int(raw, "seed", DEFAULT_SEED)
    threads = _opt_int(raw, "threads", 1)
    env_seed = os.environ.get("BINARX_SEED")
    if env_seed is not None:
        seed = _parse_env_int("BINARX_SEED", env_seed)
    env_threads = os.environ.get("BINARX_THREADS")
    if env_threads is not None:
        threads = _parse_env_int("BINARX_THREADS", env_threads)
    if seed_override is not None:
        seed = int(seed_override)
    if threads_override is not None:
        threads = int(threads_override)
    if threads < 1:
        raise ConfigError("threads", "must be >= 1")
    return LoadedConfig(raw=raw, base_dir=path.parent, seed=seed, threads=threads)


def _parse_env_int(name: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(name, f"environment override must be an integer, got {value!r}") from None


_REQUIRED = object()


def _get(cfg: dict, path: str, default=_REQUIRED):
    node = cfg
    walked = []
    for part in path.split("."):
        walked.append(part)
        if not isinstance(node, dict) or part not in node:
            if default is _REQUIRED:
                raise ConfigError(".".join(walked), "required field is missing")
            return default
        node = node[part]
    return node


def _typed(cfg: dict, path: str, kind, default=_REQUIRED):
    value = _get(cfg, path, default)
    if default is not _REQUIRED and value is default:
        return value
    try:
        if kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise ValueError
            return int(value)
        if kind is float:
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise ValueError
            return value
        if kind is list:
            if not isinstance(value, list):
                raise ValueError
            return value
    except (TypeError, ValueError):
        pass
    raise ConfigError(path, f"expected {kind.__name__}, got {value!r}")


def _opt_int(cfg: dict, path: str, default: int) -> int:
    value = _get(cfg, path, None)
    return default if value is None else _typed(cfg, path, int)


def parse_model(loaded: LoadedConfig) -> tuple[ModelSpec, int]:
    """ModelSpec and burn-in from the `model` section (reference model if absent)."""
    cfg = loaded.raw
    if "model" not in cfg:
        return default_model_spec(), DEFAULT_BURN_IN
    section = _get(cfg, "model")
    n = _typed(cfg, "model.n", int)
    beta_list = _typed(cfg, "model.beta", list)
    exo_cfg = section.get("exo", {})
    if not isinstance(exo_cfg, dict):
        raise ConfigError("model.exo", "must be an object")
    l = _opt_int(cfg, "model.exo.l", max(len(beta_list) - 2, 0))
    try:
        exo = ExogenousSpec(
            dist=str(exo_cfg.get("dist", "normal")),
            mean=float(exo_cfg.get("mean", 1.0)),
            sd=float(exo_cfg.get("sd", 0.1)),
            clamp_lo=float(exo_cfg.get("clamp_lo", 0.0)),
            clamp_hi=float(exo_cfg.get("clamp_hi", 10.0)),
            l=l,
        )
        beta = ParamVector.from_array([float(v) for v in beta_list])
        spec = ModelSpec(n=n, beta=beta, exo=exo)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None
    burn_in = _opt_int(cfg, "model.burn_in", DEFAULT_BURN_IN)
    if burn_in < 0:
        raise ConfigError("model.burn_in", "must be >= 0")
    return spec, burn_in


def resolve_path(loaded: LoadedConfig, path_str: str) -> Path:
    p = Path(path_str)
    return p if p.is_absolute() else loaded.base_dir / p


def parse_calibrate(loaded: LoadedConfig) -> CalibrationConfig:
    cfg = loaded.raw
    section = cfg.get("calibrate", {})
    if not isinstance(section, dict):
        raise ConfigError("calibrate", "must be an object")
    if "model" in cfg:
        spec, _ = parse_model(loaded)
        default_dim = spec.beta.dim
    else:
        default_dim = 3
    try:
        return CalibrationConfig(
            dim=_opt_int(cfg, "calibrate.dim", default_dim),
            horizon=float(section.get("horizon", 3.0)),
            grid_m=_opt_int(cfg, "calibrate.grid_m", 1000),
            reps=_opt_int(cfg, "calibrate.reps", 10_000),
            gammas=tuple(float(g) for g in section.get("gammas", [0.0, 0.25, 0.4])),
            alphas=tuple(float(a) for a in section.get("alphas", [0.1, 0.05, 0.025, 0.01])),
            master_seed=loaded.seed,
        )
    except ValueError as exc:
        raise ConfigError("calibrate", str(exc)) from None


def parse_experiment(loaded: LoadedConfig) -> tuple[str, ExperimentConfig]:
    cfg = loaded.raw
    kind = _typed(cfg, "experiment.kind", str)
    if kind not in _EXPERIMENT_REPS:
        raise ConfigError(
            "experiment.kind", f"must be one of {sorted(_EXPERIMENT_REPS)}, got {kind!r}"
        )
    section = _get(cfg, "experiment")
    spec, burn_in = parse_model(loaded)
    change = None
    if "change" in section:
        at_k = _typed(cfg, "experiment.change.at_k", int)
        new_beta = _typed(cfg, "experiment.change.beta", list)
        try:
            change = ChangePoint(at_k=at_k, new_beta=ParamVector.from_array(new_beta))
        except ValueError as exc:
            raise ConfigError("experiment.change", str(exc)) from None
    thresholds = None
    if "thresholds" in section:
        thresholds = read_threshold_table(resolve_path(loaded, _typed(cfg, "experiment.thresholds", str)))
    default_m = {"consistency": (500, 1000, 1500), "normality": (400,), "size": (100, 200, 300),
                 "power": (100, 200, 300)}[kind]
    try:
        exp = ExperimentConfig(
            spec=spec,
            m_list=tuple(int(m) for m in section.get("m_list", default_m)),
            reps=_opt_int(cfg, "experiment.reps", _EXPERIMENT_REPS[kind]),
            gammas=tuple(float(g) for g in section.get("gammas", [0.0, 0.25, 0.4])),
            alphas=tuple(float(a) for a in section.get("alphas", [0.1, 0.05, 0.025, 0.01])),
            horizon=float(section.get("horizon", 3.0)),
            change=change,
            master_seed=loaded.seed,
            burn_in=burn_in,
            a_source=_typed(cfg, "experiment.a_source", str, "aux"),
            aux_length=_opt_int(cfg, "experiment.aux_length", 10_000),
            calibration_reps=_opt_int(cfg, "experiment.calibration_reps", 10_000),
            calibration_grid=_opt_int(cfg, "experiment.calibration_grid", 1000),
            thresholds=thresholds,
            emit_traces=_opt_int(cfg, "experiment.emit_traces", 0),
        )
    except ValueError as exc:
        raise ConfigError("experiment", str(exc)) from None
    if kind == "power" and exp.change is None:
        raise ConfigError("experiment.change", "required for the power experiment")
    return kind, exp


def _weeks_in_iso_year(year: int) -> int:
    try:
        datetime.date.fromisocalendar(year, 53, 1)
        return 53
    except ValueError:
        return 52


def expand_window(start: tuple[int, int], end: tuple[int, int]) -> list[tuple[int, int]]:
    """Inclusive list of (iso_year, week) labels from start to end."""
    year, week = int(start[0]), int(start[1])
    end_year, end_week = int(end[0]), int(end[1])
    if (year, week) > (end_year, end_week):
        raise ValueError("window start is after window end")
    out = []
    while (year, week) <= (end_year, end_week):
        out.append((year, week))
        week += 1
        if week > _weeks_in_iso_year(year):
            year, week = year + 1, 1
    return out


def parse_prep(loaded: LoadedConfig) -> dict:
    cfg = loaded.raw
    rates = resolve_path(loaded, _typed(cfg, "prep.rates", str))
    states = _typed(cfg, "prep.states", list)
    if not states or not all(isinstance(s, str) for s in states):
        raise ConfigError("prep.states", "must be a non-empty list of state names")
    years = _typed(cfg, "prep.baseline_years", list)
    try:
        years = [int(y) for y in years]
    except (TypeError, ValueError):
        raise ConfigError("prep.baseline_years", "must be a list of integers") from None
    start = _typed(cfg, "prep.window_start", list)
    end = _typed(cfg, "prep.window_end", list)
    for name, value in (("window_start", start), ("window_end", end)):
        if len(value) != 2:
            raise ConfigError(f"prep.{name}", "must be [iso_year, week]")
    try:
        window = expand_window(tuple(start), tuple(end))
    except ValueError as exc:
        raise ConfigError("prep.window_start", str(exc)) from None
    return {"rates": rates, "states": states, "baseline_years": years, "window": window}
