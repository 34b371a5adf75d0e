import csv
import json

import numpy as np
from binarx import default_model_spec, read_series_csv, simulate_series
from binarx.cli import run_command

MODEL_SECTION = {
    "n": 10,
    "beta": [-1.0, 0.1, 0.4],
    "exo": {"dist": "normal", "mean": 1.0, "sd": 0.1, "clamp_lo": 0.0, "clamp_hi": 10.0, "l": 1},
    "burn_in": 200,
}


def _write_config(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh)
    return str(path)


def _write_stream_csv(path, sample):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "x", "w1"])
        for k in range(sample.m):
            writer.writerow([k + 1, int(sample.x[k + 1]), repr(float(sample.w[k, 0]))])


def _rates_fixture_csv(path):
    lines = ["state,iso_year,week,rate"]
    for week in range(1, 7):
        lines += [f"A,2019,{week},1.0", f"B,2019,{week},2.0"]
    evals = {
        ("A", 1): 1.5, ("A", 2): 0.5, ("A", 3): 1.0, ("A", 4): 2.0, ("A", 5): 0.9, ("A", 6): 1.1,
        ("B", 1): 2.5, ("B", 2): 2.5, ("B", 3): 1.9, ("B", 4): 2.0, ("B", 5): 2.1, ("B", 6): 0.1,
    }
    for (state, week), rate in evals.items():
        lines.append(f"{state},2020,{week},{rate}")
    path.write_text("\n".join(lines) + "\n")


def test_simulate_round_trip_and_determinism(tmp_path):
    cfg = _write_config(tmp_path / "cfg.json",
                        {"seed": 9, "model": MODEL_SECTION, "simulate": {"length": 60}})
    assert run_command(["--config", cfg, "--out", str(tmp_path / "a"), "--quiet", "simulate"]) == 0
    assert run_command(["--config", cfg, "--out", str(tmp_path / "b"), "--quiet", "simulate"]) == 0
    a = (tmp_path / "a" / "series.csv").read_bytes()
    b = (tmp_path / "b" / "series.csv").read_bytes()
    assert a == b
    sample = read_series_csv(tmp_path / "a" / "series.csv")
    expected = simulate_series(default_model_spec(), 60, seed=9, burn_in=200)
    np.testing.assert_array_equal(sample.x, expected.x)


def test_fit_command(tmp_path):
    cfg = _write_config(
        tmp_path / "cfg.json",
        {"seed": 10, "model": MODEL_SECTION, "simulate": {"length": 300},
         "fit": {"series": "out/series.csv"}},
    )
    assert run_command(["--config", cfg, "--out", str(tmp_path / "out"), "--quiet", "simulate"]) == 0
    assert run_command(["--config", cfg, "--out", str(tmp_path / "out"), "--quiet", "fit"]) == 0
    report = json.loads((tmp_path / "out" / "fit_report.json").read_text())
    assert report["converged"] is True
    assert len(report["beta_hat"]) == 3


def test_calibrate_then_monitor_threshold_round_trip(tmp_path):
    out = tmp_path / "out"
    cfg = _write_config(
        tmp_path / "cfg.json",
        {
            "seed": 11,
            "model": MODEL_SECTION,
            "simulate": {"length": 150},
            "calibrate": {"reps": 400, "gammas": [0.25], "alphas": [0.1, 0.05]},
            "monitor": {"training": "out/series.csv", "stream": "stream.csv",
                        "gamma": 0.25, "alpha": 0.05, "thresholds": "out/thresholds.csv"},
        },
    )
    assert run_command(["--config", cfg, "--out", str(out), "--quiet", "simulate"]) == 0
    assert run_command(["--config", cfg, "--out", str(out), "--quiet", "calibrate"]) == 0
    training = read_series_csv(out / "series.csv")
    stream = simulate_series(default_model_spec(), 450, seed=77,
                             init=int(training.x[-1]), burn_in=0)
    _write_stream_csv(tmp_path / "stream.csv", stream)
    code = run_command(["--config", cfg, "--out", str(out), "--quiet", "monitor"])
    result = json.loads((out / "monitor_result.json").read_text())
    with open(out / "thresholds.csv") as fh:
        rows = list(csv.DictReader(fh))
    table_c = {(float(r["gamma"]), float(r["alpha"])): float(r["c"]) for r in rows}
    assert result["threshold_c"] == table_c[(0.25, 0.05)]
    assert code in (0, 3)
    log_lines = (out / "monitor_log.csv").read_text().strip().splitlines()
    assert log_lines[0] == "k,statistic,threshold,alarm"
    assert len(log_lines) == result["k_final"] + 1


def test_monitor_infinite_threshold_no_alarm(tmp_path):
    out = tmp_path / "out"
    cfg_payload = {
        "seed": 12,
        "model": MODEL_SECTION,
        "simulate": {"length": 100},
        "monitor": {"training": "out/series.csv", "stream": "stream.csv",
                    "gamma": 0.0, "alpha": 0.05, "threshold_c": 1e999},
    }
    cfg = _write_config(tmp_path / "cfg.json", cfg_payload)
    assert json.loads(open(cfg).read())["monitor"]["threshold_c"] == float("inf")
    assert run_command(["--config", cfg, "--out", str(out), "--quiet", "simulate"]) == 0
    training = read_series_csv(out / "series.csv")
    stream = simulate_series(default_model_spec(), 300, seed=78,
                             init=int(training.x[-1]), burn_in=0)
    _write_stream_csv(tmp_path / "stream.csv", stream)
    assert run_command(["--config", cfg, "--out", str(out), "--quiet", "monitor"]) == 0
    result = json.loads((out / "monitor_result.json").read_text())
    assert result["alarm_at"] is None
    assert result["k_final"] == 300


def test_monitor_alarm_exit_code(tmp_path):
    out = tmp_path / "out"
    cfg = _write_config(
        tmp_path / "cfg.json",
        {
            "seed": 13,
            "model": MODEL_SECTION,
            "simulate": {"length": 200},
            "monitor": {"training": "out/series.csv", "stream": "stream.csv",
                        "gamma": 0.0, "alpha": 0.05, "threshold_c": 1e-9},
        },
    )
    assert run_command(["--config", cfg, "--out", str(out), "--quiet", "simulate"]) == 0
    training = read_series_csv(out / "series.csv")
    stream = simulate_series(default_model_spec(), 10, seed=79,
                             init=int(training.x[-1]), burn_in=0)
    _write_stream_csv(tmp_path / "stream.csv", stream)
    assert run_command(["--config", cfg, "--out", str(out), "--quiet", "monitor"]) == 3
    result = json.loads((out / "monitor_result.json").read_text())
    assert result["alarm_at"] == 1


def test_experiment_command(tmp_path):
    cfg = _write_config(
        tmp_path / "cfg.json",
        {
            "seed": 14,
            "model": MODEL_SECTION,
            "experiment": {"kind": "consistency", "m_list": [80], "reps": 3},
        },
    )
    out = tmp_path / "out"
    assert run_command(["--config", cfg, "--out", str(out), "--quiet", "experiment"]) == 0
    lines = (out / "consistency_report.csv").read_text().strip().splitlines()
    assert lines[0] == "m,param,mse,reps_used,failures,flagged"
    assert len(lines) == 4
    meta = json.loads((out / "consistency_meta.json").read_text())
    assert meta["experiment"] == "consistency"


def test_prep_and_compare_commands(tmp_path):
    _rates_fixture_csv(tmp_path / "rates.csv")
    cfg = _write_config(
        tmp_path / "cfg.json",
        {
            "prep": {"rates": "rates.csv", "states": ["A", "B"], "baseline_years": [2019],
                     "window_start": [2020, 1], "window_end": [2020, 6]},
            "compare": {"series": "out/binomial_series.csv"},
        },
    )
    out = tmp_path / "out"
    assert run_command(["--config", cfg, "--out", str(out), "--quiet", "prep"]) == 0
    lines = (out / "binomial_series.csv").read_text().strip().splitlines()
    assert lines[0] == "# n=2"
    assert [line.split(",")[2] for line in lines[2:]] == ["2", "1", "0", "1", "1", "1"]
    assert run_command(["--config", cfg, "--out", str(out), "--quiet", "compare"]) == 0
    result = json.loads((out / "comparison.json").read_text())
    assert set(result) >= {"aic_simple", "aic_ar1", "lr_stat", "p_value"}


def test_usage_errors(tmp_path, capsys):
    assert run_command(["--config", "nope.json", "bogus"]) == 2
    assert run_command(["--config", str(tmp_path / "missing.json"), "simulate"]) == 2
    cfg = _write_config(tmp_path / "cfg.json", {"model": MODEL_SECTION, "simulate": {}})
    assert run_command(["--config", cfg, "--out", str(tmp_path), "simulate"]) == 2
    err = capsys.readouterr().err
    assert "simulate.length" in err


def test_runtime_error_exit(tmp_path):
    cfg = _write_config(
        tmp_path / "cfg.json",
        {"model": MODEL_SECTION, "fit": {"series": "absent.csv"}},
    )
    assert run_command(["--config", cfg, "--out", str(tmp_path), "--quiet", "fit"]) == 1


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = _write_config(tmp_path / "cfg.json",
                        {"seed": 1, "model": MODEL_SECTION, "simulate": {"length": 30}})
    monkeypatch.setenv("BINARX_SEED", "2")
    run_command(["--config", cfg, "--out", str(tmp_path / "env"), "--quiet", "simulate"])
    run_command(["--config", cfg, "--out", str(tmp_path / "flag"), "--seed", "3",
                 "--quiet", "simulate"])
    monkeypatch.delenv("BINARX_SEED")
    run_command(["--config", cfg, "--out", str(tmp_path / "cfgseed"), "--quiet", "simulate"])
    env = read_series_csv(tmp_path / "env" / "series.csv")
    flag = read_series_csv(tmp_path / "flag" / "series.csv")
    cfgseed = read_series_csv(tmp_path / "cfgseed" / "series.csv")
    spec = default_model_spec()
    np.testing.assert_array_equal(env.x, simulate_series(spec, 30, seed=2, burn_in=200).x)
    np.testing.assert_array_equal(flag.x, simulate_series(spec, 30, seed=3, burn_in=200).x)
    np.testing.assert_array_equal(cfgseed.x, simulate_series(spec, 30, seed=1, burn_in=200).x)


def test_console_entry_point(tmp_path):
    import subprocess
    import sys

    cfg = _write_config(tmp_path / "cfg.json",
                        {"seed": 4, "model": MODEL_SECTION, "simulate": {"length": 20}})
    proc = subprocess.run(
        [sys.executable, "-m", "binarx.cli", "--config", cfg, "--out", str(tmp_path / "o"),
         "--quiet", "simulate"],
        capture_output=True,
    )
    assert proc.returncode == 0
    assert (tmp_path / "o" / "series.csv").exists()
