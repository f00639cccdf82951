"""Confidence intervals for the regression function at a point.

Three constructions: HulC (hull of batch estimates), subsampling with an
estimated rate, and a pivot that uses the true local parameters together with
Monte Carlo quantiles of the classical limit law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .data_gen import DgpSpec, RawSample, draw
from .errors import DegenerateSubsampling, InvalidInput, SampleTooSmall
from .isotonic import fit_value_at, pava, sort_xy
from .limit_law import EmpiricalLaw
from .rng import rng_for

METHODS = ("HulC", "Subsample", "OraclePivot")

Estimator = Callable[[np.ndarray, np.ndarray, float], float]


def _isotonic_at(xs, ys, x0):
    return fit_value_at(xs, ys, x0)


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    level: float
    method: str
    x0: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise InvalidInput(f"interval endpoints out of order: {self.lo} > {self.hi}")
        if not 0.0 < self.level < 1.0:
            raise InvalidInput("level must lie in (0, 1)")
        if self.method not in METHODS:
            raise InvalidInput(f"unknown method {self.method!r}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def as_record(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "level": self.level, "method": self.method, "x0": self.x0}


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise InvalidInput("alpha must lie in (0, 1)")


# ---------------------------------------------------------------------------
# HulC


@dataclass(frozen=True)
class HulcPlan:
    alpha: float
    B_alpha: int
    B_star: int
    u: float
    batch_assignment: np.ndarray

    def batches(self) -> list:
        return [np.flatnonzero(self.batch_assignment == b) for b in range(self.B_star)]


def hulc_batch_count(alpha: float) -> int:
    """Smallest ``B`` with ``2^(1-B) <= alpha``."""
    _check_alpha(alpha)
    # the guard keeps alpha = 2^-k from rounding up to k + 2
    return int(math.ceil(math.log2(2.0 / alpha) - 1e-12))


def hulc_threshold(alpha: float) -> float:
    """Probability of using one batch fewer so the miscoverage is exactly alpha.

    With ``B`` batches a median-unbiased estimator misses with probability
    ``2^(1-B)``; mixing ``B_alpha - 1`` and ``B_alpha`` batches interpolates.
    """
    B = hulc_batch_count(alpha)
    lo, hi = 2.0 ** (1 - B), 2.0 ** (2 - B)
    return max(0.0, (alpha - lo) / (hi - lo))


def hulc_plan(alpha: float, seed, n: int) -> HulcPlan:
    B = hulc_batch_count(alpha)
    if n < B:
        raise SampleTooSmall(f"HulC at alpha={alpha} needs at least {B} observations, got {n}")
    rng = rng_for("hulc", seed)
    u = float(rng.random())
    b_star = B - 1 if u <= hulc_threshold(alpha) else B
    b_star = max(b_star, 1)
    labels = np.empty(n, dtype=np.int64)
    for b, idx in enumerate(np.array_split(rng.permutation(n), b_star)):
        labels[idx] = b
    return HulcPlan(alpha, B, b_star, u, labels)


def hulc_ci(data: RawSample, x0: float, alpha: float, seed, estimator: Estimator = _isotonic_at) -> ConfidenceInterval:
    """Range of the batch estimates at ``x0``.

    Batches without covariates on one side of ``x0`` still contribute through
    the constant extension of their fit.
    """
    plan = hulc_plan(alpha, seed, len(data))
    est = [estimator(data.xs[b], data.ys[b], x0) for b in plan.batches()]
    return ConfidenceInterval(float(min(est)), float(max(est)), 1.0 - alpha, "HulC", float(x0))


def hulc_band(data: RawSample, grid: Sequence[float], alpha: float, seed) -> list:
    """Pointwise HulC intervals tightened into monotone envelopes."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(np.diff(grid) < 0):
        raise InvalidInput("grid must be a non-empty non-decreasing sequence")
    plan = hulc_plan(alpha, seed, len(data))
    fits = np.array([pava(sort_xy(data.xs[b], data.ys[b])).step(grid) for b in plan.batches()])
    fits = fits.reshape(plan.B_star, len(grid))
    lo = np.maximum.accumulate(fits.min(axis=0))
    hi = np.minimum.accumulate(fits.max(axis=0)[::-1])[::-1]
    return [ConfidenceInterval(float(a), float(b), 1.0 - alpha, "HulC", float(x)) for a, b, x in zip(lo, hi, grid)]


def hulc_miscoverage_bound(alpha: float, delta: float) -> float:
    """Miscoverage bound of HulC for an estimator with median bias ``delta``."""
    B = hulc_batch_count(alpha)
    bd = B * delta
    return alpha * (1.0 + 2.0 * bd**2 * math.exp(2.0 * bd))


# ---------------------------------------------------------------------------
# Subsampling with an estimated rate

SUBSAMPLES_PER_SIZE = 200


@dataclass(frozen=True)
class SubsampleFit:
    """Intermediate quantities of the subsampling interval."""

    beta_hat: float
    m1: int
    m2: int
    iqr1: float
    iqr2: float
    center: float
    roots: np.ndarray


def _iqr(v):
    q1, q3 = np.quantile(v, [0.25, 0.75])
    return float(q3 - q1)


def subsample_fit(
    data: RawSample, x0: float, seed, estimator: Estimator = _isotonic_at, K: int = SUBSAMPLES_PER_SIZE
) -> SubsampleFit:
    n = len(data)
    if n < 16:
        raise SampleTooSmall("subsampling needs n >= 16")
    m1, m2 = int(math.floor(math.sqrt(n))), int(math.floor(n ** (2.0 / 3.0)))
    rng = rng_for("subsample", seed)
    xs, ys = data.xs, data.ys

    def estimates(m):
        out = np.empty(K)
        for k in range(K):
            idx = rng.choice(n, m, replace=False)
            out[k] = estimator(xs[idx], ys[idx], x0)
        return out

    e1, e2 = estimates(m1), estimates(m2)
    iqr1, iqr2 = _iqr(e1), _iqr(e2)
    if iqr1 <= 0 or iqr2 <= 0:
        raise DegenerateSubsampling(f"zero subsample spread (IQR {iqr1:g} at m={m1}, {iqr2:g} at m={m2})")
    beta = math.log(iqr1 / iqr2) / math.log(m2 / m1)
    center = float(estimator(xs, ys, x0))
    roots = m1**beta * (e1 - center)
    return SubsampleFit(beta, m1, m2, iqr1, iqr2, center, roots)


def subsample_ci(
    data: RawSample, x0: float, alpha: float, seed, estimator: Estimator = _isotonic_at
) -> ConfidenceInterval:
    _check_alpha(alpha)
    fit = subsample_fit(data, x0, seed, estimator)
    scale = len(data) ** fit.beta_hat
    q_lo, q_hi = np.quantile(fit.roots, [alpha / 2.0, 1.0 - alpha / 2.0])
    return ConfidenceInterval(
        float(fit.center - q_hi / scale), float(fit.center - q_lo / scale), 1.0 - alpha, "Subsample", float(x0)
    )


# ---------------------------------------------------------------------------
# Oracle pivot


def pivot_scale(theta: float, A: float, h0: float, sigma0_sq: float) -> float:
    """Scale of the classical limit ``(sigma^(2 theta) A / ((theta+1) h^theta))^(1/(2 theta+1))``."""
    return (sigma0_sq**theta * A / ((theta + 1.0) * h0**theta)) ** (1.0 / (2.0 * theta + 1.0))


def oracle_pivot_ci(
    data: RawSample,
    x0: float,
    alpha: float,
    theta: float,
    A: float,
    h0: float,
    sigma0_sq: float,
    law,
    estimator: Estimator = _isotonic_at,
) -> ConfidenceInterval:
    """Symmetric interval ``f_hat -+ n^(-theta/(2 theta+1)) scale q``.

    ``law`` holds draws of the slope at zero of the GCM of ``B(t) + |t|^(theta+1)``
    and ``q`` is the ``1 - alpha`` quantile of their absolute values, which is
    the upper ``alpha/2`` point of the symmetric law.
    """
    _check_alpha(alpha)
    draws = law.draws if isinstance(law, EmpiricalLaw) else np.asarray(law, dtype=float)
    q = float(np.quantile(np.abs(draws), 1.0 - alpha, method="hazen"))
    n = len(data)
    half = n ** (-theta / (2.0 * theta + 1.0)) * pivot_scale(theta, A, h0, sigma0_sq) * q
    center = float(estimator(data.xs, data.ys, x0))
    return ConfidenceInterval(center - half, center + half, 1.0 - alpha, "OraclePivot", float(x0))


# ---------------------------------------------------------------------------
# Median bias


@dataclass(frozen=True)
class MedianBiasReport:
    estimate: float
    reps: int
    mc_se: float
    p_below: float = float("nan")
    p_above: float = float("nan")


def median_bias_from(estimates, truth: float) -> MedianBiasReport:
    """``(1/2 - min(P(est <= truth), P(est >= truth)))_+``; ties count on both sides."""
    est = np.asarray(estimates, dtype=float)
    reps = len(est)
    below = float(np.mean(est <= truth))
    above = float(np.mean(est >= truth))
    value = max(0.0, 0.5 - min(below, above))
    return MedianBiasReport(value, reps, math.sqrt(0.25 / reps), below, above)


def median_bias(
    dgp: DgpSpec, x0: float, reps: int, seed, estimator: Optional[Estimator] = None
) -> MedianBiasReport:
    if reps < 100:
        raise InvalidInput("median bias needs at least 100 replications")
    estimator = estimator or _isotonic_at
    truth = float(dgp.mean()(x0))
    est = np.empty(reps)
    for r in range(reps):
        s = draw(dgp, ("median_bias", seed, r))
        est[r] = estimator(s.xs, s.ys, x0)
    return median_bias_from(est, truth)
