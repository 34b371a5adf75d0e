"""Monte-Carlo critical values for the monitoring statistic.

Under no change, the supremum of the weighted monitoring statistic converges
to sup_{0 < s <= N} rho^2(s, gamma) (W1(s) - s W2(1))' A (W1(s) - s W2(1)),
where W1 and W2 are independent Wiener processes sharing the score covariance
Sigma.  Each replication discretizes the supremum on a grid of `grid_m`
points per unit time: the partial sums of grid_m * N i.i.d. Normal(0, Sigma)
vectors divided by sqrt(grid_m) simulate W1, and one extra draw simulates
W2(1).  The critical value c(gamma, alpha) is the empirical (1 - alpha)
quantile of the replicated suprema.

With the default metric policy A = Sigma^{-1}, writing W = L B for the
Cholesky factor L of Sigma turns the quadratic form into a plain squared norm
of standard-normal partial sums, so the thresholds do not depend on Sigma at
all.  Tables built under that policy use this whitened form directly, which
makes the independence exact.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .defaults import DEFAULT_SEED
from .exceptions import ThresholdUnavailableError
from ._parallel import map_over_reps

_DEFAULT_GAMMAS = (0.0, 0.25, 0.4)
_DEFAULT_ALPHAS = (0.1, 0.05, 0.025, 0.01)


@dataclass(frozen=True)
class CalibrationConfig:
    """Settings for one threshold computation.

    `dim` is the dimension of the score vector (coefficient count l + 2).
    `sigma` is the Wiener covariance; `a_policy` is "inverse_sigma" (default,
    metric A = sigma^{-1}, thresholds sigma-free) or "explicit" with
    `a_matrix` supplied.  `horizon` is the close-end multiplier N.
    """

    dim: int = 3
    sigma: np.ndarray | None = None
    a_policy: str = "inverse_sigma"
    a_matrix: np.ndarray | None = None
    horizon: float = 3.0
    grid_m: int = 1000
    reps: int = 10_000
    gammas: tuple[float, ...] = _DEFAULT_GAMMAS
    alphas: tuple[float, ...] = _DEFAULT_ALPHAS
    master_seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.grid_m < 100:
            raise ValueError("grid_m must be >= 100")
        if self.reps < 100:
            raise ValueError("reps must be >= 100")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.a_policy not in ("inverse_sigma", "explicit"):
            raise ValueError(f"unknown a_policy {self.a_policy!r}")
        for g in self.gammas:
            if not 0.0 <= g < 0.5:
                raise ValueError(f"gamma must lie in [0, 0.5), got {g}")
        for a in self.alphas:
            if not 0.0 < a < 1.0:
                raise ValueError(f"alpha must lie in (0, 1), got {a}")
        if self.sigma is not None:
            sig = np.asarray(self.sigma, dtype=float)
            if sig.shape != (self.dim, self.dim):
                raise ValueError(f"sigma must be {self.dim}x{self.dim}")
            if np.abs(sig - sig.T).max() > 1e-10:
                raise ValueError("sigma must be symmetric")
            object.__setattr__(self, "sigma", sig)
        if self.a_policy == "explicit":
            if self.a_matrix is None:
                raise ValueError("explicit a_policy requires a_matrix")
            A = np.asarray(self.a_matrix, dtype=float)
            if A.shape != (self.dim, self.dim):
                raise ValueError(f"a_matrix must be {self.dim}x{self.dim}")
            object.__setattr__(self, "a_matrix", A)

    @property
    def steps(self) -> int:
        return int(np.floor(self.horizon * self.grid_m + 1e-9))


@dataclass(frozen=True)
class ThresholdTable:
    """Critical values keyed by (gamma, alpha), with the recipe metadata."""

    entries: dict
    reps: int
    grid_m: int
    horizon: float
    master_seed: int

    def lookup(self, gamma: float, alpha: float) -> float:
        key = (float(gamma), float(alpha))
        if key in self.entries:
            return self.entries[key]
        for (g, a), c in self.entries.items():
            if abs(g - key[0]) < 1e-12 and abs(a - key[1]) < 1e-12:
                return c
        raise ThresholdUnavailableError(
            f"no threshold for gamma={gamma}, alpha={alpha} in table"
        )

    def gammas(self) -> tuple[float, ...]:
        return tuple(sorted({g for g, _ in self.entries}))

    def alphas(self) -> tuple[float, ...]:
        return tuple(sorted({a for _, a in self.entries}, reverse=True))


def _grid(config: CalibrationConfig) -> np.ndarray:
    return np.arange(1, config.steps + 1) / config.grid_m


def _rho_sq(s: np.ndarray, gamma: float) -> np.ndarray:
    return (s ** (-gamma) * (s + 1.0) ** (gamma - 1.0)) ** 2


def _rep_rng(master_seed: int, rep_index: int) -> np.random.Generator:
    # Documented stream contract: replication r draws from (master_seed, r),
    # so results are independent of evaluation order and worker count.
    return np.random.default_rng(np.random.SeedSequence((master_seed, rep_index)))


def _rep_quadratic_path(config: CalibrationConfig, rep_index: int) -> np.ndarray:
    """Quadratic-form path q(k) = D_k' A D_k, D_k = W1(k/grid) - (k/grid) W2(1).

    Shared by every gamma (common random numbers): the draw order is the W1
    increment block followed by the single W2 vector, in both the whitened
    and the explicit route.
    """
    rng = _rep_rng(config.master_seed, rep_index)
    steps = config.steps
    s = _grid(config)
    eps = rng.standard_normal((steps, config.dim))
    eps2 = rng.standard_normal(config.dim)
    if config.a_policy == "inverse_sigma":
        # Whitened route: algebraically identical to drawing Normal(0, sigma)
        # increments and measuring with A = sigma^{-1}.
        W1 = np.cumsum(eps, axis=0) / np.sqrt(config.grid_m)
        D = W1 - s[:, None] * eps2
        return np.einsum("kd,kd->k", D, D)
    sigma = config.sigma if config.sigma is not None else np.eye(config.dim)
    L = np.linalg.cholesky(sigma)
    V = eps @ L.T
    W1 = np.cumsum(V, axis=0) / np.sqrt(config.grid_m)
    D = W1 - s[:, None] * (L @ eps2)
    return np.einsum("kd,kd->k", D @ config.a_matrix, D)


def sample_sup_functional(config: CalibrationConfig, gamma: float, rep_index: int) -> float:
    """One replication of the supremum functional for the given gamma.

    Always takes the explicit route (Cholesky draws, quadratic form in A) so
    the whitened shortcut can be validated against it; with sigma = None the
    covariance is the identity.
    """
    if config.a_policy == "explicit":
        a_matrix = config.a_matrix
    elif config.sigma is not None:
        a_matrix = np.linalg.inv(config.sigma)
    else:
        a_matrix = np.eye(config.dim)
    explicit = CalibrationConfig(
        dim=config.dim,
        sigma=config.sigma,
        a_policy="explicit",
        a_matrix=a_matrix,
        horizon=config.horizon,
        grid_m=config.grid_m,
        reps=config.reps,
        gammas=config.gammas,
        alphas=config.alphas,
        master_seed=config.master_seed,
    )
    q = _rep_quadratic_path(explicit, rep_index)
    return float((_rho_sq(_grid(config), gamma) * q).max())


def _sup_rep_worker(config: CalibrationConfig, rep_index: int) -> np.ndarray:
    q = _rep_quadratic_path(config, rep_index)
    s = _grid(config)
    return np.array([(_rho_sq(s, g) * q).max() for g in config.gammas])


def _sup_samples(config: CalibrationConfig, threads: int = 1) -> np.ndarray:
    """(reps, len(gammas)) matrix of supremum samples under common streams."""
    rows = map_over_reps(_sup_rep_worker, config, config.reps, threads)
    return np.vstack(rows)


def quantile_higher(values: np.ndarray, q: float) -> float:
    """Empirical quantile, 'higher' convention: smallest value with CDF >= q.

    The tiny guard keeps q * size from crossing an integer boundary through
    float rounding alone (e.g. q = 1 - 1/size must select the minimum).
    """
    u = np.sort(np.asarray(values, dtype=float))
    idx = int(np.ceil(q * u.size - 1e-9)) - 1
    return float(u[min(max(idx, 0), u.size - 1)])


def compute_threshold(
    config: CalibrationConfig, gamma: float, alpha: float, threads: int = 1
) -> float:
    """Critical value c(gamma, alpha): the empirical (1 - alpha) quantile."""
    if config.reps * alpha < 5:
        warnings.warn(
            f"reps*alpha = {config.reps * alpha:.1f} < 5: tail quantile is unstable",
            stacklevel=2,
        )
    single = _replace_gammas(config, (float(gamma),))
    sups = _sup_samples(single, threads)[:, 0]
    return quantile_higher(sups, 1.0 - alpha)


def threshold_table(config: CalibrationConfig, threads: int = 1) -> ThresholdTable:
    """Critical values for every (gamma, alpha) cell of the config.

    All gammas share each replication's random numbers, so the table is
    monotone in gamma sample-wise, and monotonicity in alpha holds exactly
    because every alpha reads the same sorted sample.
    """
    for a in config.alphas:
        if config.reps * a < 5:
            warnings.warn(
                f"reps*alpha = {config.reps * a:.1f} < 5: tail quantile is unstable",
                stacklevel=2,
            )
    sups = _sup_samples(config, threads)
    entries = {}
    for j, g in enumerate(config.gammas):
        for a in config.alphas:
            entries[(float(g), float(a))] = quantile_higher(sups[:, j], 1.0 - a)
    return ThresholdTable(
        entries=entries,
        reps=config.reps,
        grid_m=config.grid_m,
        horizon=config.horizon,
        master_seed=config.master_seed,
    )


def _replace_gammas(config: CalibrationConfig, gammas: tuple[float, ...]) -> CalibrationConfig:
    return CalibrationConfig(
        dim=config.dim,
        sigma=config.sigma,
        a_policy=config.a_policy,
        a_matrix=config.a_matrix,
        horizon=config.horizon,
        grid_m=config.grid_m,
        reps=config.reps,
        gammas=gammas,
        alphas=config.alphas,
        master_seed=config.master_seed,
    )


def write_threshold_table(table: ThresholdTable, path) -> None:
    """CSV with columns gamma,alpha,c,reps,grid_m,N,seed (one row per cell)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gamma", "alpha", "c", "reps", "grid_m", "N", "seed"])
        for g in table.gammas():
            for a in table.alphas():
                writer.writerow(
                    [
                        repr(float(g)),
                        repr(float(a)),
                        repr(table.entries[(g, a)]),
                        table.reps,
                        table.grid_m,
                        repr(float(table.horizon)),
                        table.master_seed,
                    ]
                )


def read_threshold_table(path) -> ThresholdTable:
    entries = {}
    meta = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["gamma", "alpha", "c", "reps", "grid_m", "N", "seed"]
        if header != expected:
            raise ValueError(f"{path}: expected header {expected}, got {header}")
        for row in reader:
            if not row:
                continue
            entries[(float(row[0]), float(row[1]))] = float(row[2])
            meta = (int(row[3]), int(row[4]), float(row[5]), int(row[6]))
    if not entries:
        raise ValueError(f"{path}: threshold table is empty")
    reps, grid_m, horizon, seed = meta
    return ThresholdTable(
        entries=entries, reps=reps, grid_m=grid_m, horizon=horizon, master_seed=seed
    )
