"""Maximum partial likelihood estimation for the binomial AR(1) model.

The log partial likelihood conditions on X0 and the covariates, so each
transition contributes log C(n, X_t) + X_t log pi_t + (n - X_t) log(1 - pi_t).
Its gradient has the closed form sum_t z_{t-1} (X_t - n pi_t), and the score
gradient is -n sum_t z_{t-1} z_{t-1}' pi_t (1 - pi_t).  The estimator solves
score = 0 by a damped Newton iteration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, gammaln

from .defaults import PARAM_BOX_BOUND
from .exceptions import NonConvergenceError, SeparationError, SingularHessianError
from .model import ParamVector, SeriesSample


@dataclass(frozen=True)
class SolverConfig:
    """Newton solver settings.

    Convergence requires the sup-norm of the score to fall below `tol`; the
    iteration also stops when the accepted step is shorter than `step_tol`.
    Steps that would decrease the log partial likelihood are halved up to
    `max_halvings` times, and iterates are projected back onto the coordinate
    box [-box_bound, box_bound] (a boundary hit is reported, not fatal).
    """

    tol: float = 1e-8
    step_tol: float = 1e-10
    max_iter: int = 100
    max_halvings: int = 30
    box_bound: float = PARAM_BOX_BOUND
    cond_limit: float = 1e12
    raise_on_nonconvergence: bool = True


@dataclass(frozen=True)
class FitResult:
    """Fitted coefficients with curvature-based uncertainty estimates.

    `covariance` is the estimator of the limiting covariance of
    sqrt(m) (beta_hat - beta0), i.e. the inverse of the averaged negated
    score gradient; divide by the sample size (see estimate_covariance) for
    the covariance of beta_hat itself.  `sigma0_hat` is the outer-product
    estimator sum_t G_t G_t' / m evaluated at beta_hat.
    """

    beta_hat: ParamVector
    covariance: np.ndarray
    sigma0_hat: np.ndarray
    log_pl: float
    iterations: int
    converged: bool
    final_score_norm: float
    hit_boundary: bool
    n: int
    n_obs: int

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance) / self.n_obs)

    @property
    def aic(self) -> float:
        return 2.0 * self.beta_hat.dim - 2.0 * self.log_pl


def _design(series: SeriesSample, spec_n: int) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix Z (rows z_{t-1}) and responses y = x[1:]."""
    if series.m < 1:
        raise ValueError("series has no transitions")
    if np.any(series.x > spec_n):
        raise ValueError(f"series contains counts above n={spec_n}")
    m = series.m
    Z = np.empty((m, 2 + series.l), dtype=float)
    Z[:, 0] = 1.0
    Z[:, 1] = series.x[:-1]
    Z[:, 2:] = series.w
    return Z, series.x[1:].astype(float)


def _beta_array(beta, dim: int) -> np.ndarray:
    b = beta.as_array() if isinstance(beta, ParamVector) else np.asarray(beta, dtype=float)
    if b.shape != (dim,):
        raise ValueError(f"beta has shape {b.shape}, expected ({dim},)")
    return b


def log_partial_likelihood(series: SeriesSample, spec_n: int, beta) -> float:
    """Log partial likelihood over t = 1..m, binomial coefficients included.

    Keeping the combinatorial term makes values comparable across different
    models of the same data (as needed for AIC).
    """
    Z, y = _design(series, spec_n)
    b = _beta_array(beta, Z.shape[1])
    eta = Z @ b
    log_binom = gammaln(spec_n + 1) - gammaln(y + 1) - gammaln(spec_n - y + 1)
    return float(np.sum(log_binom + y * eta - spec_n * np.logaddexp(0.0, eta)))


def score(series: SeriesSample, spec_n: int, beta) -> np.ndarray:
    """Score vector sum_t z_{t-1} (x_t - n pi_t), the gradient of the log PL."""
    Z, y = _design(series, spec_n)
    b = _beta_array(beta, Z.shape[1])
    pi = expit(Z @ b)
    return Z.T @ (y - spec_n * pi)


def score_gradient(series: SeriesSample, spec_n: int, beta) -> np.ndarray:
    """Gradient of the score: -n sum_t z z' pi (1 - pi).  Exactly symmetric, NSD."""
    Z, y = _design(series, spec_n)
    b = _beta_array(beta, Z.shape[1])
    pi = expit(Z @ b)
    B = Z * np.sqrt(spec_n * pi * (1.0 - pi))[:, None]
    M = -(B.T @ B)
    return 0.5 * (M + M.T)


def _solve_newton_step(H: np.ndarray, g: np.ndarray, cond_limit: float) -> np.ndarray:
    if np.linalg.cond(H) > cond_limit:
        raise SingularHessianError(
            f"negated score gradient has condition number above {cond_limit:g}"
        )
    try:
        return cho_solve(cho_factor(H, lower=True), g)
    except np.linalg.LinAlgError:
        return np.linalg.solve(H, g)


def fit_mple(
    series: SeriesSample,
    spec_n: int,
    solver: SolverConfig | None = None,
    log_pl_trace: list | None = None,
) -> FitResult:
    """Maximize the partial likelihood by damped Newton iteration from beta = 0.

    Raises SeparationError when every response sits at the same boundary
    (0 or n), SingularHessianError on a numerically singular curvature
    matrix, and NonConvergenceError when the score tolerance is not reached
    within the iteration budget (unless the solver config opts out).  When a
    list is passed as `log_pl_trace` the accepted log-PL values are appended
    to it, one per iteration.
    """
    cfg = solver or SolverConfig()
    Z, y = _design(series, spec_n)
    m, d = Z.shape
    if m < d + 1:
        raise ValueError(f"need at least {d + 1} transitions to fit {d} coefficients, got {m}")
    if np.all(y == 0) or np.all(y == spec_n):
        raise SeparationError("all responses at the same boundary; the MPLE diverges")

    log_binom = float(np.sum(gammaln(spec_n + 1) - gammaln(y + 1) - gammaln(spec_n - y + 1)))

    def log_pl_at(b: np.ndarray) -> float:
        eta = Z @ b
        return log_binom + float(np.sum(y * eta - spec_n * np.logaddexp(0.0, eta)))

    beta = np.zeros(d)
    lp = log_pl_at(beta)
    if log_pl_trace is not None:
        log_pl_trace.append(lp)
    hit_boundary = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        pi = expit(Z @ beta)
        g = Z.T @ (y - spec_n * pi)
        if np.abs(g).max() < cfg.tol:
            iterations -= 1
            break
        B = Z * np.sqrt(spec_n * pi * (1.0 - pi))[:, None]
        H = B.T @ B
        H = 0.5 * (H + H.T)
        step = _solve_newton_step(H, g, cfg.cond_limit)
        # Step-halving: retreat whenever the full step would decrease log PL.
        scale = 1.0
        accept_floor = lp - 1e-10 * (1.0 + abs(lp))
        for _ in range(cfg.max_halvings + 1):
            cand = np.clip(beta + scale * step, -cfg.box_bound, cfg.box_bound)
            lp_cand = log_pl_at(cand)
            if lp_cand >= accept_floor:
                break
            scale *= 0.5
        if np.any(cand != beta + scale * step):
            hit_boundary = True
        step_norm = np.abs(cand - beta).max()
        beta, lp = cand, lp_cand
        if log_pl_trace is not None:
            log_pl_trace.append(lp)
        if step_norm < cfg.step_tol:
            break

    final_norm = float(np.abs(Z.T @ (y - spec_n * expit(Z @ beta))).max())
    converged = final_norm < cfg.tol
    if not converged and cfg.raise_on_nonconvergence:
        raise NonConvergenceError(
            f"score norm {final_norm:.3e} above tolerance {cfg.tol:g} "
            f"after {iterations} iterations"
        )

    pi = expit(Z @ beta)
    B = Z * np.sqrt(spec_n * pi * (1.0 - pi))[:, None]
    H = B.T @ B
    H = 0.5 * (H + H.T)
    if np.linalg.cond(H) > cfg.cond_limit:
        raise SingularHessianError("curvature matrix singular at the optimum")
    covariance = np.linalg.inv(H / m)
    covariance = 0.5 * (covariance + covariance.T)
    resid = Z * (y - spec_n * pi)[:, None]
    sigma0 = resid.T @ resid / m
    sigma0 = 0.5 * (sigma0 + sigma0.T)

    return FitResult(
        beta_hat=ParamVector.from_array(beta),
        covariance=covariance,
        sigma0_hat=sigma0,
        log_pl=lp,
        iterations=iterations,
        converged=converged,
        final_score_norm=final_norm,
        hit_boundary=hit_boundary,
        n=spec_n,
        n_obs=m,
    )


def estimate_covariance(fit: FitResult, m: int) -> np.ndarray:
    """Covariance estimate for beta_hat itself at sample size m (shrinks like 1/m)."""
    if not fit.converged:
        raise ValueError("covariance is only meaningful for a converged fit")
    return fit.covariance / m


def estimate_sigma0(series: SeriesSample, spec_n: int, beta_hat) -> np.ndarray:
    """Outer-product score covariance sum_t G_t G_t' / m at the given coefficients."""
    Z, y = _design(series, spec_n)
    b = _beta_array(beta_hat, Z.shape[1])
    resid = Z * (y - spec_n * expit(Z @ b))[:, None]
    sigma0 = resid.T @ resid / Z.shape[0]
    return 0.5 * (sigma0 + sigma0.T)


def fit_report(fit: FitResult) -> dict:
    """JSON-ready summary of a fit."""
    return {
        "beta_hat": list(fit.beta_hat.as_array()),
        "standard_errors": list(fit.standard_errors()),
        "covariance": [list(row) for row in fit.covariance],
        "sigma0_hat": [list(row) for row in fit.sigma0_hat],
        "log_pl": fit.log_pl,
        "aic": fit.aic,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "final_score_norm": fit.final_score_norm,
        "hit_boundary": fit.hit_boundary,
        "n": fit.n,
        "n_obs": fit.n_obs,
    }


def write_fit_report(fit: FitResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(fit_report(fit), fh, indent=2, sort_keys=True)
        fh.write("\n")
