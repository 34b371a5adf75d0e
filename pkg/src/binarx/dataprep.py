"""Deseasonalization of weekly rate panels and baseline model comparison.

A panel of per-state weekly rates is reduced to a binomial count series by
comparing each observation against that state's same-week multi-year average:
the count at a week is the number of states whose rate strictly exceeds their
baseline.  The resulting series can then be compared against an i.i.d.
binomial null via AIC and a likelihood-ratio test.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, gammaln, xlogy

from .estimation import fit_mple
from .exceptions import MissingBaselineError, PanelCoverageError
from .model import SeriesSample


@dataclass(frozen=True)
class RateRow:
    state: str
    iso_year: int
    week: int
    rate: float

    def __post_init__(self):
        if not 1 <= self.week <= 53:
            raise ValueError(f"week must be in 1..53, got {self.week}")
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"rate must be finite and >= 0, got {self.rate}")


class RatePanel:
    """Weekly rates keyed by (state, iso_year, week); duplicates rejected."""

    def __init__(self, rows):
        self._index: dict[tuple[str, int, int], float] = {}
        for row in rows:
            if not isinstance(row, RateRow):
                row = RateRow(*row)
            key = (row.state, row.iso_year, row.week)
            if key in self._index:
                raise ValueError(f"duplicate panel entry for {key}")
            self._index[key] = row.rate

    def __len__(self) -> int:
        return len(self._index)

    def get(self, state: str, iso_year: int, week: int) -> float | None:
        return self._index.get((state, iso_year, week))

    def items(self):
        return self._index.items()

    @classmethod
    def from_csv(cls, path) -> "RatePanel":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["state", "iso_year", "week", "rate"]:
                raise ValueError(
                    f"{path}: expected header state,iso_year,week,rate, got {header}"
                )
            rows = [
                RateRow(row[0], int(row[1]), int(row[2]), float(row[3]))
                for row in reader
                if row
            ]
        return cls(rows)


@dataclass(frozen=True)
class BaselineTable:
    """Per (state, week-of-year) mean rate over the baseline years.

    Lookups for weeks beyond 52 fall back to the week-52 entry (long ISO
    years); a missing mapped entry raises MissingBaselineError.
    """

    entries: dict

    def lookup(self, state: str, week: int) -> float:
        mapped = min(week, 52)
        try:
            return self.entries[(state, mapped)]
        except KeyError:
            raise MissingBaselineError([(state, mapped)]) from None


def compute_baseline(panel: RatePanel, baseline_years) -> BaselineTable:
    """Arithmetic mean rate per (state, week-of-year) over the baseline years."""
    years = set(baseline_years)
    sums: dict[tuple[str, int], list[float]] = {}
    for (state, year, week), rate in panel.items():
        if year in years:
            sums.setdefault((state, week), []).append(rate)
    if not sums:
        raise MissingBaselineError([("<any>", 0)])
    return BaselineTable(entries={key: float(np.mean(v)) for key, v in sums.items()})


@dataclass(frozen=True)
class BinomialSeries:
    """Counts in {0..n} with (iso_year, week) labels; n = number of states."""

    x: np.ndarray
    n: int
    labels: tuple

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.int64)
        if np.any(x < 0) or np.any(x > self.n):
            raise ValueError(f"counts must lie in 0..{self.n}")
        if len(self.labels) != x.size:
            raise ValueError("labels must match the series length")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "labels", tuple((int(y), int(w)) for y, w in self.labels))


def binarize_and_sum(
    panel: RatePanel, baseline: BaselineTable, states, window
) -> BinomialSeries:
    """Count, week by week, the states whose rate strictly exceeds baseline.

    Ties count as not exceeding.  `window` is an ordered sequence of
    (iso_year, week) labels; any gap in panel coverage or baseline entries
    raises before a partial series can leak out.
    """
    states = list(states)
    if not states:
        raise ValueError("need at least one state")
    missing_rates = []
    missing_base = []
    counts = []
    for year, week in window:
        total = 0
        for state in states:
            rate = panel.get(state, year, week)
            if rate is None:
                missing_rates.append((state, year, week))
                continue
            mapped = min(week, 52)
            base = baseline.entries.get((state, mapped))
            if base is None:
                missing_base.append((state, mapped))
                continue
            total += 1 if rate > base else 0
        counts.append(total)
    if missing_rates:
        raise PanelCoverageError(missing_rates)
    if missing_base:
        raise MissingBaselineError(sorted(set(missing_base)))
    return BinomialSeries(x=np.array(counts, dtype=np.int64), n=len(states), labels=tuple(window))


def _iid_log_lik(x: np.ndarray, n: int, pi: float) -> float:
    log_binom = gammaln(n + 1) - gammaln(x + 1) - gammaln(n - x + 1)
    return float(np.sum(log_binom + xlogy(x, pi) + xlogy(n - x, 1.0 - pi)))


def fit_iid_binomial(series: BinomialSeries) -> dict:
    """Constant-probability fit: pi_hat = sum(x) / (n T), with AIC.

    The log likelihood keeps the binomial coefficients, matching the AR(1)
    partial-likelihood convention so the two AICs are comparable.  A boundary
    pi_hat (all-zero or all-n data) is flagged rather than fatal.
    """
    x = series.x
    if x.size == 0:
        raise ValueError("series is empty")
    pi_hat = float(x.sum()) / (series.n * x.size)
    log_lik = _iid_log_lik(x, series.n, pi_hat)
    return {
        "pi_hat": pi_hat,
        "log_lik": log_lik,
        "aic": 2.0 - 2.0 * log_lik,
        "boundary": pi_hat in (0.0, 1.0),
    }


def chi2_sf(x: float, df: int = 1) -> float:
    """Chi-square survival function via the regularized upper incomplete gamma."""
    if x < 0:
        raise ValueError("chi-square statistic must be >= 0")
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    return float(gammaincc(df / 2.0, x / 2.0))


def model_comparison(series: BinomialSeries) -> dict:
    """AIC comparison and LR test: AR(1) on (1, x_{t-1}) vs constant pi.

    Both likelihoods run over the transitions t = 1..T (the AR(1) model
    conditions on x_0, and the constant model is evaluated on the same range
    so the comparison is like for like).  The LR statistic has one degree of
    freedom: the constant model is the AR(1) family pinned at phi1 = 0.
    """
    x = series.x
    if x.size < 2:
        raise ValueError("need at least 2 observations to compare models")
    sample = SeriesSample(x=x, w=np.empty((x.size - 1, 0)))
    fit = fit_mple(sample, series.n)
    ll_ar1 = fit.log_pl

    tail = x[1:]
    pi_hat = float(tail.sum()) / (series.n * tail.size)
    ll_simple = _iid_log_lik(tail, series.n, pi_hat)

    lr = 2.0 * (ll_ar1 - ll_simple)
    return {
        "aic_simple": 2.0 - 2.0 * ll_simple,
        "aic_ar1": 4.0 - 2.0 * ll_ar1,
        "lr_stat": lr,
        "p_value": chi2_sf(max(lr, 0.0), df=1),
        "pi_hat": pi_hat,
        "ll_simple": ll_simple,
        "ll_ar1": ll_ar1,
        "beta_hat_ar1": list(fit.beta_hat.as_array()),
        "n": series.n,
        "n_obs_compared": int(tail.size),
    }


def write_binomial_series(series: BinomialSeries, path) -> None:
    """CSV with a `# n=...` metadata line, then iso_year,week,x rows."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# n={series.n}\n")
        writer = csv.writer(fh)
        writer.writerow(["iso_year", "week", "x"])
        for (year, week), count in zip(series.labels, series.x):
            writer.writerow([year, week, int(count)])


def read_binomial_series(path) -> BinomialSeries:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# n="):
            raise ValueError(f"{path}: expected '# n=...' metadata line, got {first!r}")
        n = int(first[4:])
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["iso_year", "week", "x"]:
            raise ValueError(f"{path}: expected header iso_year,week,x, got {header}")
        labels = []
        counts = []
        for row in reader:
            if not row:
                continue
            labels.append((int(row[0]), int(row[1])))
            counts.append(int(row[2]))
    return BinomialSeries(x=np.array(counts, dtype=np.int64), n=n, labels=tuple(labels))


def write_comparison(result: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
