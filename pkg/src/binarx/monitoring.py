"""Close-end sequential change-point monitoring for the binomial AR(1) model.

After fitting coefficients on m clean training points, the monitor tracks the
running score sum S(k) = sum_{t=m+1}^{m+k} z_{t-1} (x_t - n pi_t(beta_hat))
and raises an alarm the first time the weighted quadratic statistic

    weight(m, k, gamma)^2 * S(k)' A S(k)

exceeds a critical value.  Monitoring stops at the horizon k = floor(N * m)
if no alarm occurred.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import ThresholdTable
from .estimation import fit_mple
from .exceptions import BinarxError, MonitoringTerminatedError
from .model import ParamVector, SeriesSample, build_regressor, success_prob

# The training residual identity sum_t G(x_t, beta_hat) = 0 must hold at init;
# it underpins the approximation the monitoring statistic relies on.
_SCORE_IDENTITY_TOL = 1e-8


def rho(s: float, gamma: float) -> float:
    """Weight shape rho(s, gamma) = s^(-gamma) * (s + 1)^(gamma - 1), s > 0.

    Strictly decreasing in s; gamma in [0, 1/2) tunes how much early
    monitoring points are amplified.
    """
    _check_gamma(gamma)
    if s <= 0:
        raise ValueError(f"rho needs s > 0, got {s}")
    return s ** (-gamma) * (s + 1.0) ** (gamma - 1.0)


def weight(m, k, gamma: float):
    """Monitoring weight m^(-1/2) * (1 + k/m)^(-1) * (k/(m+k))^(-gamma).

    Equals m^(-1/2) * rho(k/m, gamma).  Accepts scalar or array k so the
    experiment harnesses can evaluate whole statistic paths with the exact
    same arithmetic as the step-by-step monitor.
    """
    _check_gamma(gamma)
    if m < 1:
        raise ValueError("m must be >= 1")
    k = np.asarray(k, dtype=float)
    if np.any(k < 1):
        raise ValueError("weight needs k >= 1")
    out = m ** (-0.5) * (1.0 + k / m) ** (-1.0) * (k / (m + k)) ** (-gamma)
    return float(out) if out.ndim == 0 else out


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma < 0.5:
        raise ValueError(f"gamma must lie in [0, 0.5), got {gamma}")


def _validate_a_matrix(A: np.ndarray, dim: int) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.shape != (dim, dim):
        raise ValueError(f"A must be {dim}x{dim}, got {A.shape}")
    if np.abs(A - A.T).max() > 1e-10:
        raise ValueError("A must be symmetric within 1e-10")
    if np.linalg.eigvalsh(A).min() <= 0:
        raise ValueError("A must be positive definite")
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class MonitorConfig:
    """Frozen monitoring parameters: sizes, sensitivity, critical value, metric."""

    m: int
    horizon: float
    gamma: float
    alpha: float
    threshold_c: float
    a_matrix: np.ndarray

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("training length m must be >= 1")
        if self.horizon <= 0:
            raise ValueError("horizon multiplier must be > 0")
        _check_gamma(self.gamma)
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.threshold_c > 0:
            raise ValueError("threshold must be positive")
        A = _validate_a_matrix(self.a_matrix, np.asarray(self.a_matrix).shape[0])
        A.setflags(write=False)
        object.__setattr__(self, "a_matrix", A)

    @property
    def horizon_steps(self) -> int:
        return int(np.floor(self.horizon * self.m + 1e-9))


@dataclass
class MonitorState:
    """Sequential monitor: strictly ordered single-writer updates.

    `running_sum` always equals the score sum over the k monitored points seen
    so far, recomputable from the stream.  Once `alarm_at` is set, further
    updates are rejected.
    """

    beta_hat: ParamVector
    n: int
    config: MonitorConfig
    x_prev: int
    k: int = 0
    running_sum: np.ndarray = None  # type: ignore[assignment]
    statistic_history: list[float] = field(default_factory=list)
    alarm_at: int | None = None

    def __post_init__(self):
        if self.running_sum is None:
            self.running_sum = np.zeros(self.beta_hat.dim)

    @property
    def terminated(self) -> bool:
        return self.alarm_at is not None or self.k >= self.config.horizon_steps


@dataclass(frozen=True)
class MonitorResult:
    alarm_at: int | None
    statistic_history: tuple[float, ...]
    truncated: bool
    k_final: int


def monitor_init(
    training: SeriesSample,
    spec_n: int,
    horizon: float,
    gamma: float,
    alpha: float,
    a_policy="inverse_sigma0",
    threshold_source: float | ThresholdTable | None = None,
) -> MonitorState:
    """Fit the training window and assemble a fresh monitor.

    `a_policy` selects the statistic's metric: "inverse_sigma0" (default)
    inverts the training outer-product score covariance, "identity" reduces
    the statistic to the weighted squared norm of the score sum, and an
    explicit symmetric positive definite matrix is used as given.
    `threshold_source` is either a critical value or a threshold table to
    look (gamma, alpha) up in.
    """
    fit = fit_mple(training, spec_n)
    if fit.final_score_norm >= _SCORE_IDENTITY_TOL:
        raise BinarxError(
            f"training score sum {fit.final_score_norm:.3e} violates the zero-score identity"
        )
    d = fit.beta_hat.dim
    if isinstance(a_policy, str):
        if a_policy == "inverse_sigma0":
            A = np.linalg.inv(fit.sigma0_hat)
            A = 0.5 * (A + A.T)
        elif a_policy == "identity":
            A = np.eye(d)
        else:
            raise ValueError(f"unknown a_policy {a_policy!r}")
    else:
        A = _validate_a_matrix(a_policy, d)

    if threshold_source is None:
        raise BinarxError("no threshold source supplied")
    if isinstance(threshold_source, ThresholdTable):
        c = threshold_source.lookup(gamma, alpha)
    else:
        c = float(threshold_source)

    config = MonitorConfig(
        m=training.m, horizon=horizon, gamma=gamma, alpha=alpha, threshold_c=c, a_matrix=A
    )
    return MonitorState(
        beta_hat=fit.beta_hat, n=spec_n, config=config, x_prev=int(training.x[-1])
    )


def monitor_update(state: MonitorState, x_new: int, w_new) -> tuple[MonitorState, float]:
    """Consume one observation; returns the updated state and its statistic.

    Raises MonitoringTerminatedError once an alarm fired or the horizon was
    reached.
    """
    cfg = state.config
    if state.alarm_at is not None:
        raise MonitoringTerminatedError(f"alarm already raised at k={state.alarm_at}")
    if state.k >= cfg.horizon_steps:
        raise MonitoringTerminatedError(f"horizon {cfg.horizon_steps} reached")
    if not 0 <= x_new <= state.n:
        raise ValueError(f"observation {x_new} outside {{0..{state.n}}}")

    z = build_regressor(state.x_prev, w_new)
    pi = success_prob(state.beta_hat, z)
    state.running_sum = state.running_sum + z * (x_new - state.n * pi)
    state.k += 1
    w2 = weight(cfg.m, state.k, cfg.gamma) ** 2
    statistic = float(w2 * (state.running_sum @ cfg.a_matrix @ state.running_sum))
    state.statistic_history.append(statistic)
    if statistic >= cfg.threshold_c:
        state.alarm_at = state.k
    state.x_prev = int(x_new)
    return state, statistic


def monitor_run(state: MonitorState, stream) -> MonitorResult:
    """Consume (x, w) pairs until an alarm or the close-end horizon.

    A stream that ends early with no alarm yields a truncated result.
    """
    horizon = state.config.horizon_steps
    it = iter(stream)
    while state.alarm_at is None and state.k < horizon:
        try:
            x_new, w_new = next(it)
        except StopIteration:
            return MonitorResult(
                alarm_at=None,
                statistic_history=tuple(state.statistic_history),
                truncated=True,
                k_final=state.k,
            )
        monitor_update(state, x_new, w_new)
    return MonitorResult(
        alarm_at=state.alarm_at,
        statistic_history=tuple(state.statistic_history),
        truncated=False,
        k_final=state.k,
    )
