"""Command-line front-end tying the modules into reproducible workflows.

Exit codes: 0 success, 1 runtime error, 2 usage or config error, and 3 for
`monitor` when an alarm fired (a machine-readable signal).  Every subcommand
is deterministic given its config and seed; thread count never changes
results.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .calibration import read_threshold_table, threshold_table, write_threshold_table
from .dataprep import (
    RatePanel,
    binarize_and_sum,
    compute_baseline,
    model_comparison,
    read_binomial_series,
    write_binomial_series,
    write_comparison,
)
from .estimation import fit_mple, write_fit_report
from .exceptions import BinarxError, ConfigError
from .experiments import (
    run_consistency,
    run_normality,
    run_power,
    run_size,
    write_consistency_csv,
    write_estimates_csv,
    write_metadata_json,
    write_normality_csv,
    write_power_csv,
    write_size_csv,
    write_traces_csv,
)
from .model import read_series_csv, simulate_series, write_series_csv
from .monitoring import monitor_init, monitor_update

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_ALARM = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binarx",
        description="Binomial AR(1) toolkit: simulation, fitting, threshold "
        "calibration, sequential monitoring, experiments, and data prep.",
    )
    parser.add_argument("--config", required=True, help="path to the JSON config file")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--threads", type=int, default=None, help="worker process count")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in [
        ("simulate", "simulate a series and write it as CSV"),
        ("fit", "fit the MPLE on a series CSV and write a JSON report"),
        ("calibrate", "compute a critical-value table and write it as CSV"),
        ("monitor", "run the sequential monitor over a stream CSV"),
        ("experiment", "run a simulation study (consistency|normality|size|power)"),
        ("prep", "deseasonalize a weekly rate panel into a binomial series"),
        ("compare", "AIC / likelihood-ratio comparison against an i.i.d. binomial"),
    ]:
        sub.add_parser(name, help=doc)
    return parser


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def _cmd_simulate(loaded, out: Path, quiet: bool) -> int:
    spec, burn_in = cfgmod.parse_model(loaded)
    raw = loaded.raw
    length = cfgmod._typed(raw, "simulate.length", int)
    init = cfgmod._get(raw, "simulate.init", None)
    sample = simulate_series(
        spec, length, seed=loaded.seed, init=None if init is None else int(init), burn_in=burn_in
    )
    path = out / "series.csv"
    write_series_csv(sample, path)
    _say(quiet, f"wrote {path} ({length} transitions, seed {loaded.seed})")
    return EXIT_OK


def _cmd_fit(loaded, out: Path, quiet: bool) -> int:
    spec, _ = cfgmod.parse_model(loaded)
    series_path = cfgmod.resolve_path(loaded, cfgmod._typed(loaded.raw, "fit.series", str))
    sample = read_series_csv(series_path)
    fit = fit_mple(sample, spec.n)
    path = out / "fit_report.json"
    write_fit_report(fit, path)
    _say(quiet, f"wrote {path} (converged={fit.converged}, iterations={fit.iterations})")
    return EXIT_OK


def _cmd_calibrate(loaded, out: Path, quiet: bool) -> int:
    calib = cfgmod.parse_calibrate(loaded)
    table = threshold_table(calib, threads=loaded.threads)
    path = out / "thresholds.csv"
    write_threshold_table(table, path)
    _say(quiet, f"wrote {path} ({len(table.entries)} cells, reps={table.reps})")
    return EXIT_OK


def _cmd_monitor(loaded, out: Path, quiet: bool) -> int:
    raw = loaded.raw
    spec, _ = cfgmod.parse_model(loaded)
    training = read_series_csv(
        cfgmod.resolve_path(loaded, cfgmod._typed(raw, "monitor.training", str))
    )
    stream_path = cfgmod.resolve_path(loaded, cfgmod._typed(raw, "monitor.stream", str))
    gamma = float(cfgmod._get(raw, "monitor.gamma", 0.0))
    alpha = float(cfgmod._get(raw, "monitor.alpha", 0.05))
    horizon = float(cfgmod._get(raw, "monitor.horizon", 3.0))
    a_policy = cfgmod._typed(raw, "monitor.a_policy", str, "inverse_sigma0")
    if "threshold_c" in raw.get("monitor", {}):
        source = float(cfgmod._get(raw, "monitor.threshold_c"))
    elif "thresholds" in raw.get("monitor", {}):
        source = read_threshold_table(
            cfgmod.resolve_path(loaded, cfgmod._typed(raw, "monitor.thresholds", str))
        )
    else:
        raise ConfigError("monitor.threshold_c", "need threshold_c or a thresholds table path")

    state = monitor_init(
        training, spec.n, horizon=horizon, gamma=gamma, alpha=alpha,
        a_policy=a_policy, threshold_source=source,
    )
    log_path = out / "monitor_log.csv"
    truncated = False
    with open(stream_path, newline="") as stream_fh, open(log_path, "w", newline="") as log_fh:
        reader = csv.reader(stream_fh)
        header = next(reader)
        if len(header) < 2 or header[0] != "k" or header[1] != "x":
            raise BinarxError(f"{stream_path}: expected stream header k,x,w1,...")
        log = csv.writer(log_fh)
        log.writerow(["k", "statistic", "threshold", "alarm"])
        rows = (row for row in reader if row)
        while state.alarm_at is None and state.k < state.config.horizon_steps:
            try:
                row = next(rows)
            except StopIteration:
                truncated = True
                break
            x_new = int(row[1])
            w_new = np.array([float(v) for v in row[2 : 2 + training.l]])
            _, stat = monitor_update(state, x_new, w_new)
            log.writerow(
                [state.k, repr(stat), repr(state.config.threshold_c), state.alarm_at is not None]
            )
    result = {
        "alarm_at": state.alarm_at,
        "k_final": state.k,
        "truncated": truncated,
        "horizon_steps": state.config.horizon_steps,
        "threshold_c": state.config.threshold_c,
        "gamma": gamma,
        "alpha": alpha,
        "m": state.config.m,
        "beta_hat": list(state.beta_hat.as_array()),
    }
    result_path = out / "monitor_result.json"
    with open(result_path, "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if state.alarm_at is not None:
        _say(quiet, f"ALARM at monitored index {state.alarm_at}; wrote {result_path}")
        return EXIT_ALARM
    _say(quiet, f"no alarm in {state.k} monitored points; wrote {result_path}")
    return EXIT_OK


def _cmd_experiment(loaded, out: Path, quiet: bool) -> int:
    kind, exp = cfgmod.parse_experiment(loaded)
    threads = loaded.threads
    if kind == "consistency":
        report = run_consistency(exp, threads)
        write_consistency_csv(report, out / "consistency_report.csv")
    elif kind == "normality":
        report = run_normality(exp, threads)
        write_normality_csv(report, out / "normality_report.csv")
        write_estimates_csv(report, out / "normality_estimates.csv")
    elif kind == "size":
        report = run_size(exp, threads)
        write_size_csv(report, out / "size_report.csv")
        if report.traces:
            write_traces_csv(report.traces, out / "size_traces.csv")
    else:
        report = run_power(exp, threads)
        write_power_csv(report, out / "power_report.csv")
        if report.traces:
            write_traces_csv(report.traces, out / "power_traces.csv")
    write_metadata_json(report, out / f"{kind}_meta.json")
    _say(quiet, f"wrote {kind} report to {out}")
    return EXIT_OK


def _cmd_prep(loaded, out: Path, quiet: bool) -> int:
    prep = cfgmod.parse_prep(loaded)
    panel = RatePanel.from_csv(prep["rates"])
    baseline = compute_baseline(panel, prep["baseline_years"])
    series = binarize_and_sum(panel, baseline, prep["states"], prep["window"])
    path = out / "binomial_series.csv"
    write_binomial_series(series, path)
    _say(quiet, f"wrote {path} ({series.x.size} weeks, n={series.n})")
    return EXIT_OK


def _cmd_compare(loaded, out: Path, quiet: bool) -> int:
    series = read_binomial_series(
        cfgmod.resolve_path(loaded, cfgmod._typed(loaded.raw, "compare.series", str))
    )
    result = model_comparison(series)
    path = out / "comparison.json"
    write_comparison(result, path)
    _say(
        quiet,
        f"wrote {path} (AIC simple {result['aic_simple']:.2f} vs AR1 {result['aic_ar1']:.2f})",
    )
    return EXIT_OK


_HANDLERS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "calibrate": _cmd_calibrate,
    "monitor": _cmd_monitor,
    "experiment": _cmd_experiment,
    "prep": _cmd_prep,
    "compare": _cmd_compare,
}


def run_command(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        loaded = cfgmod.load_config(args.config, args.seed, args.threads)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _HANDLERS[args.command](loaded, out, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BinarxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
