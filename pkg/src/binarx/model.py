"""Binomial AR(1) process with a logistic link and exogenous covariates.

The observation X_t takes values in {0, ..., n}.  Conditionally on the past,

    X_t | X_{t-1}, W_t  ~  Binomial(n, pi_t),
    logit(n * pi_t / n) = beta' z_{t-1},   z_{t-1} = (1, X_{t-1}, W_t),

where the exogenous vector W_t is i.i.d. over time, independent of past
observations, and clamped to a known bounded interval.  This module holds the
domain types, the link function, series simulation, CSV serialization, and a
small-instance stationary-distribution oracle for cross-checking simulations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import expit, gammaln

from .defaults import DEFAULT_BURN_IN, PARAM_BOX_BOUND
from .exceptions import NonConvergenceError

# Smallest/largest probabilities representable strictly inside (0, 1).
_PROB_FLOOR = np.nextafter(0.0, 1.0)
_PROB_CEIL = np.nextafter(1.0, 0.0)

# Clamped-normal quadrature covers mean +- this many standard deviations;
# the mass beyond it (~1e-15 per side) is folded in by renormalizing.
_QUAD_SPAN_SDS = 8.0


@dataclass(frozen=True)
class ParamVector:
    """Coefficient vector (phi0, phi1, gamma_exo) of the link equation.

    phi0 is the intercept, phi1 the coefficient on the previous count, and
    gamma_exo the coefficients on the exogenous covariates.  All entries must
    be finite and lie in the compact box [-PARAM_BOX_BOUND, PARAM_BOX_BOUND].
    """

    phi0: float
    phi1: float
    gamma_exo: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gamma_exo", tuple(float(g) for g in self.gamma_exo))
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError("parameter vector has non-finite entries")
        if np.any(np.abs(vals) > PARAM_BOX_BOUND):
            raise ValueError(
                f"parameter vector leaves the box [-{PARAM_BOX_BOUND}, {PARAM_BOX_BOUND}]"
            )

    @property
    def l(self) -> int:
        return len(self.gamma_exo)

    @property
    def dim(self) -> int:
        return 2 + len(self.gamma_exo)

    def as_array(self) -> np.ndarray:
        return np.array([self.phi0, self.phi1, *self.gamma_exo], dtype=float)

    @classmethod
    def from_array(cls, values) -> "ParamVector":
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("parameter array must be 1-d with at least 2 entries")
        return cls(phi0=float(values[0]), phi1=float(values[1]), gamma_exo=tuple(values[2:]))


@dataclass(frozen=True)
class ExogenousSpec:
    """I.i.d. exogenous covariate distribution with clamping bounds.

    Each of the l coordinates is drawn independently from the base
    distribution and clamped to [clamp_lo, clamp_hi] afterwards, which keeps
    the covariates bounded as the model requires.  Only dist="normal" ships.
    """

    dist: str = "normal"
    mean: float = 1.0
    sd: float = 0.1
    clamp_lo: float = 0.0
    clamp_hi: float = 10.0
    l: int = 1

    def __post_init__(self):
        if self.dist != "normal":
            raise ValueError(f"unsupported exogenous distribution {self.dist!r}")
        if self.l < 0:
            raise ValueError("exogenous dimension l must be >= 0")
        if not (math.isfinite(self.clamp_lo) and math.isfinite(self.clamp_hi)):
            raise ValueError("clamp bounds must be finite")
        if not self.clamp_lo < self.clamp_hi:
            raise ValueError("clamp_lo must be strictly below clamp_hi")
        if not (math.isfinite(self.mean) and self.sd > 0):
            raise ValueError("normal base distribution needs finite mean and sd > 0")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw a (size, l) matrix of clamped covariates."""
        if self.l == 0:
            return np.empty((size, 0), dtype=float)
        raw = rng.normal(self.mean, self.sd, size=(size, self.l))
        return np.clip(raw, self.clamp_lo, self.clamp_hi)


@dataclass(frozen=True)
class ModelSpec:
    """Complete data-generating process: binomial total, coefficients, covariates."""

    n: int
    beta: ParamVector
    exo: ExogenousSpec

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("binomial total n must be >= 1")
        if self.beta.l != self.exo.l:
            raise ValueError(
                f"beta has {self.beta.l} exogenous coefficients but exo dimension is {self.exo.l}"
            )


@dataclass(frozen=True)
class SeriesSample:
    """An observed path: counts x[0..T] paired with covariate draws w[1..T].

    Row w[t-1] holds the covariate vector that influenced x[t]; x[0] has no
    covariate row.  Arrays are made read-only so samples can be shared freely.
    """

    x: np.ndarray
    w: np.ndarray
    seed: int = 0

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=np.int64))
        w = np.ascontiguousarray(np.asarray(self.w, dtype=float))
        if x.ndim != 1 or x.size < 1:
            raise ValueError("x must be a 1-d array with at least one entry")
        if w.ndim != 2 or w.shape[0] != x.size - 1:
            raise ValueError("w must be a (T, l) matrix with T = len(x) - 1")
        if np.any(x < 0):
            raise ValueError("counts must be non-negative")
        if not np.all(np.isfinite(w)):
            raise ValueError("covariates must be finite")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    @property
    def m(self) -> int:
        """Number of observed transitions (the training length)."""
        return self.x.size - 1

    @property
    def l(self) -> int:
        return self.w.shape[1]


def link_eval(mu: float, n: int) -> float:
    """Link g(mu) = log(mu / (n - mu)) for a conditional mean mu in (0, n)."""
    if not 0 < mu < n:
        raise ValueError(f"link domain error: need 0 < mu < n, got mu={mu}, n={n}")
    return math.log(mu / (n - mu))


def inverse_link(eta: float, n: int) -> float:
    """Inverse link h(eta) = n / (1 + exp(-eta))."""
    return n * float(_stable_prob(eta))


def _stable_prob(eta):
    """Logistic probability, clipped strictly inside (0, 1) in float64."""
    return np.clip(expit(eta), _PROB_FLOOR, _PROB_CEIL)


def success_prob(beta: ParamVector | np.ndarray, z) -> float:
    """Success probability pi = 1 / (1 + exp(-beta' z)) for one regressor z.

    Strictly inside (0, 1): the clipped logistic keeps the bound even where
    float64 would saturate.
    """
    b = beta.as_array() if isinstance(beta, ParamVector) else np.asarray(beta, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape != b.shape:
        raise ValueError(f"regressor has shape {z.shape}, expected {b.shape}")
    return float(_stable_prob(b @ z))


def build_regressor(x_prev: int, w_t) -> np.ndarray:
    """Assemble the regressor (1, x_prev, w_t[0], ..., w_t[l-1])."""
    w_t = np.asarray(w_t, dtype=float).reshape(-1)
    out = np.empty(2 + w_t.size, dtype=float)
    out[0] = 1.0
    out[1] = x_prev
    out[2:] = w_t
    return out


def _scalar_prob(eta: float) -> float:
    # Overflow-safe scalar logistic for the simulation hot loop.
    if eta >= 0.0:
        p = 1.0 / (1.0 + math.exp(-eta))
    else:
        e = math.exp(eta)
        p = e / (1.0 + e)
    if p < _PROB_FLOOR:
        return _PROB_FLOOR
    if p > _PROB_CEIL:
        return _PROB_CEIL
    return p


def simulate_chain(
    spec: ModelSpec, length: int, rng: np.random.Generator, x0: int
) -> tuple[np.ndarray, np.ndarray]:
    """Advance the chain `length` steps from x0 with an existing generator.

    Draws the covariate block first (one vectorized normal draw), then the
    binomial transitions.  Returns (x, w) with x of length `length` + 1.
    """
    if not 0 <= x0 <= spec.n:
        raise ValueError(f"initial state {x0} outside {{0..{spec.n}}}")
    b = spec.beta
    w = spec.exo.draw(rng, length)
    # Exogenous part of the linear predictor, precomputed for the whole path.
    offset = b.phi0 + (w @ np.asarray(b.gamma_exo) if b.l else np.zeros(length))
    x = np.empty(length + 1, dtype=np.int64)
    x[0] = x0
    n = spec.n
    phi1 = b.phi1
    state = int(x0)
    for t in range(length):
        p = _scalar_prob(offset[t] + phi1 * state)
        state = int(rng.binomial(n, p))
        x[t + 1] = state
    return x, w


def simulate_series(
    spec: ModelSpec,
    length: int,
    seed: int,
    init: int | None = None,
    burn_in: int = DEFAULT_BURN_IN,
) -> SeriesSample:
    """Simulate a path of `length` transitions, deterministic given the seed.

    When `init` is given it is used as X0 directly.  Otherwise X0 is drawn
    Bin(n, 1/2) and a burn-in stretch is discarded so the returned path starts
    (effectively) from the stationary law.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if init is None:
        x0 = int(rng.binomial(spec.n, 0.5))
        if burn_in:
            xb, _ = simulate_chain(spec, burn_in, rng, x0)
            x0 = int(xb[-1])
    else:
        x0 = int(init)
    x, w = simulate_chain(spec, length, rng, x0)
    return SeriesSample(x=x, w=w, seed=seed)


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _coordinate_quadrature(exo: ExogenousSpec, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature for one clamped-normal coordinate: points and weights.

    Gauss-Legendre nodes cover the part of [clamp_lo, clamp_hi] where the
    density lives; the clamp bounds get point masses equal to the tail
    probabilities (clamping creates atoms that plain quadrature misses).
    Weights are renormalized to sum to one exactly.
    """
    lo, hi, mean, sd = exo.clamp_lo, exo.clamp_hi, exo.mean, exo.sd
    a = max(lo, mean - _QUAD_SPAN_SDS * sd)
    b = min(hi, mean + _QUAD_SPAN_SDS * sd)
    pts = [lo, hi]
    wts = [_norm_cdf((lo - mean) / sd), 1.0 - _norm_cdf((hi - mean) / sd)]
    if a < b:
        gx, gw = leggauss(nodes)
        interior = 0.5 * (b - a) * gx + 0.5 * (b + a)
        density = np.exp(-0.5 * ((interior - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        pts = list(interior) + pts
        wts = list(0.5 * (b - a) * gw * density) + wts
    pts = np.asarray(pts, dtype=float)
    wts = np.asarray(wts, dtype=float)
    return pts, wts / wts.sum()


def _exogenous_quadrature(exo: ExogenousSpec, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product quadrature over all l coordinates: ((Q, l) points, (Q,) weights)."""
    if exo.l == 0:
        return np.empty((1, 0), dtype=float), np.ones(1)
    pts1, wts1 = _coordinate_quadrature(exo, nodes)
    pts, wts = pts1.reshape(-1, 1), wts1
    for _ in range(exo.l - 1):
        q = pts.shape[0]
        pts = np.hstack(
            [np.repeat(pts, pts1.size, axis=0), np.tile(pts1, q).reshape(-1, 1)]
        )
        wts = (wts[:, None] * wts1[None, :]).reshape(-1)
    return pts, wts


def stationary_oracle(
    spec: ModelSpec, w_quadrature: int = 64
) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix and stationary pmf of the chain, by direct numerics.

    P[j, i] is the probability of moving from count j to count i, obtained by
    integrating the binomial transition kernel over the clamped covariate
    distribution.  The stationary pmf solves mu = mu P and is found by power
    iteration (sup-norm tolerance 1e-12).  Intended for small n only; cost
    grows with (n+1)^2 times the quadrature size, which is itself
    (w_quadrature + 2)^l.
    """
    n = spec.n
    if n > 30:
        raise ValueError("stationary_oracle is restricted to n <= 30")
    pts, wts = _exogenous_quadrature(spec.exo, w_quadrature)
    b = spec.beta
    gamma = np.asarray(b.gamma_exo)
    counts = np.arange(n + 1)
    log_binom = gammaln(n + 1) - gammaln(counts + 1) - gammaln(n - counts + 1)
    P = np.empty((n + 1, n + 1), dtype=float)
    for j in range(n + 1):
        eta = b.phi0 + b.phi1 * j + (pts @ gamma if b.l else np.zeros(len(wts)))
        p = _stable_prob(eta)
        log_pmf = (
            log_binom[None, :]
            + counts[None, :] * np.log(p)[:, None]
            + (n - counts)[None, :] * np.log1p(-p)[:, None]
        )
        P[j] = wts @ np.exp(log_pmf)
    mu = np.full(n + 1, 1.0 / (n + 1))
    for _ in range(10**6):
        nxt = mu @ P
        if np.abs(nxt - mu).max() < 1e-12:
            return P, nxt
        mu = nxt
    raise NonConvergenceError("power iteration for the stationary pmf did not converge")


def write_series_csv(sample: SeriesSample, path) -> None:
    """Write a sample as CSV with header t,x,w1..wl; the t=0 row has empty w cells."""
    l = sample.l
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x"] + [f"w{i + 1}" for i in range(l)])
        writer.writerow([0, int(sample.x[0])] + [""] * l)
        for t in range(1, sample.x.size):
            writer.writerow([t, int(sample.x[t])] + [repr(float(v)) for v in sample.w[t - 1]])


def read_series_csv(path) -> SeriesSample:
    """Read a sample written by write_series_csv."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) < 2 or header[0] != "t" or header[1] != "x":
            raise ValueError(f"{path}: expected header t,x,w1,...  got {header!r}")
        l = len(header) - 2
        xs: list[int] = []
        ws: list[list[float]] = []
        for row in reader:
            if not row:
                continue
            t = int(row[0])
            xs.append(int(row[1]))
            if t > 0:
                ws.append([float(v) for v in row[2 : 2 + l]])
    return SeriesSample(x=np.array(xs, dtype=np.int64), w=np.array(ws, dtype=float).reshape(len(ws), l))
