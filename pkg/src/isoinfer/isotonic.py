"""Isotonic least-squares regression on a sorted sample.

The fit is computed by PAVA; :func:`minmax_at` evaluates the closed-form
max-min window-average formula directly and serves as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._kernels import pava_blocks, pava_value_at
from .errors import InvalidInput
from .rng import rng_for


@dataclass(frozen=True)
class SortedSample:
    """Covariate-ordered responses.

    ``perm[i]`` is the input position of the i-th sorted pair. Covariates are
    non-decreasing; tied covariates appear in a seeded random order.
    """

    xs: np.ndarray
    ys: np.ndarray
    perm: np.ndarray
    tie_seed: int = 0

    def __post_init__(self):
        if not (len(self.xs) == len(self.ys) == len(self.perm) >= 1):
            raise InvalidInput("xs, ys and perm must have equal non-zero length")

    def __len__(self):
        return len(self.xs)

    @classmethod
    def presorted(cls, xs, ys) -> "SortedSample":
        xs = np.asarray(xs, dtype=float)
        return cls(xs, np.asarray(ys, dtype=float), np.arange(len(xs)))


@dataclass(frozen=True)
class StepFunction:
    """Left-continuous non-decreasing step function.

    Takes ``levels[j]`` on ``(knots[j-1], knots[j]]``, ``levels[0]`` at or left
    of ``knots[0]`` and ``levels[-1]`` right of ``knots[-1]``.
    """

    knots: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        if len(self.knots) != len(self.levels) or len(self.knots) == 0:
            raise InvalidInput("knots and levels must have equal non-zero length")

    def __call__(self, x):
        return evaluate(self, x)


@dataclass(frozen=True)
class FitDiagnostics:
    sse: float
    n_blocks: int
    sup_norm: float


@dataclass(frozen=True)
class IsotonicFit:
    """PAVA output: the step function plus the fitted vector on the sample."""

    step: StepFunction
    fitted: np.ndarray
    block_ends: np.ndarray

    @property
    def n_blocks(self) -> int:
        return len(self.block_ends)


def sort_sample(pairs, tie_seed: int = 0) -> SortedSample:
    """Sort ``(x, y)`` pairs by x, breaking ties uniformly at random.

    ``pairs`` may be a sequence of pairs or an ``(n, 2)`` array.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] != 2:
        raise InvalidInput("expected a non-empty sequence of (x, y) pairs")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("pairs contain non-finite values")
    return sort_xy(arr[:, 0], arr[:, 1], tie_seed)


def sort_xy(xs, ys, tie_seed: int = 0) -> SortedSample:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    order = np.argsort(xs, kind="stable")
    sx = xs[order]
    if len(sx) > 1 and np.any(sx[1:] == sx[:-1]):
        keys = rng_for("ties", tie_seed).random(len(xs))
        order = np.lexsort((keys, xs))
        sx = xs[order]
    return SortedSample(sx, ys[order], order, tie_seed)


def pava(sample: SortedSample, weights: Optional[Sequence[float]] = None) -> IsotonicFit:
    """Weighted isotonic least-squares fit by pool adjacent violators, O(n)."""
    ys = np.ascontiguousarray(sample.ys, dtype=float)
    if weights is None:
        w = np.ones(len(ys))
    else:
        w = np.ascontiguousarray(weights, dtype=float)
        if w.shape != ys.shape:
            raise InvalidInput("weights must match the sample length")
        if not np.all(w > 0):
            raise InvalidInput("weights must be strictly positive")
    levels, ends, _ = pava_blocks(ys, w)
    sizes = np.diff(np.concatenate(([0], ends)))
    fitted = np.repeat(levels, sizes)
    return IsotonicFit(_step_from_blocks(sample.xs, levels, ends), fitted, ends)


def _step_from_blocks(xs, levels, ends) -> StepFunction:
    sizes = np.diff(np.concatenate(([0], ends)))
    fitted = np.repeat(np.asarray(levels, dtype=float), sizes)
    # a tie group split across blocks takes the fitted value of its last member
    last = np.flatnonzero(np.append(xs[1:] != xs[:-1], True))
    g = fitted[last]
    keep = np.append(g[1:] != g[:-1], True)
    return StepFunction(xs[last][keep], g[keep])


def evaluate(f: StepFunction, x):
    """Evaluate a step function under the left-continuous rule."""
    x_arr = np.asarray(x, dtype=float)
    j = np.searchsorted(f.knots, x_arr, side="left")
    j = np.minimum(j, len(f.levels) - 1)
    out = f.levels[j]
    return float(out) if out.ndim == 0 else out


def minmax_at(sample: SortedSample, x0: float) -> float:
    """Max over left windows of min over right windows of mean responses.

    Direct O(n^2) evaluation of the closed-form estimator at ``x0``. Empty
    index sets are dropped, so outside the data range this reduces to the
    min-prefix (resp. max-suffix) mean.
    """
    xs, ys = sample.xs, sample.ys
    n = len(ys)
    csum = np.concatenate(([0.0], np.cumsum(ys)))
    left = np.flatnonzero(xs <= x0)
    right = np.flatnonzero(xs >= x0)
    if len(left) == 0:
        j = np.arange(n)
        return float(np.min(csum[j + 1] / (j + 1)))
    if len(right) == 0:
        i = np.arange(n)
        return float(np.max((csum[n] - csum[i]) / (n - i)))
    i = left[:, None]
    j = right[None, :]
    valid = j >= i
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = (csum[j + 1] - csum[i]) / (j - i + 1)
    avg = np.where(valid, avg, np.inf)
    return float(np.max(np.min(avg, axis=1)))


def minmax_all(sample: SortedSample) -> np.ndarray:
    """``minmax_at`` at every observed covariate, in O(n^2) overall."""
    xs, ys = sample.xs, sample.ys
    n = len(ys)
    csum = np.concatenate(([0.0], np.cumsum(ys)))
    i, j = np.arange(n)[:, None], np.arange(n)[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = np.where(j >= i, (csum[j + 1] - csum[i]) / (j - i + 1), np.inf)
    # inner[i, k] = min over j >= k; outer[l, k] = max over i <= l
    inner = np.minimum.accumulate(avg[:, ::-1], axis=1)[:, ::-1]
    outer = np.maximum.accumulate(inner, axis=0)
    first = np.searchsorted(xs, xs, side="left")
    last = np.searchsorted(xs, xs, side="right") - 1
    return outer[last, first]


def diagnostics(sample: SortedSample, f: StepFunction) -> FitDiagnostics:
    resid = sample.ys - evaluate(f, sample.xs)
    sse = float(np.mean(resid**2))
    sup = float(max(abs(f.levels[0]), abs(f.levels[-1])))
    return FitDiagnostics(sse=sse, n_blocks=len(f.levels), sup_norm=sup)


def fit_value_at(xs, ys, x0: float, tie_seed: int = 0) -> float:
    """Isotonic LSE of unsorted data evaluated at ``x0``.

    Same value as ``evaluate(pava(sort_xy(xs, ys)).step, x0)`` without
    building the step function.
    """
    s = sort_xy(xs, ys, tie_seed)
    sx = s.xs
    # last member of the tie group of the first covariate at or right of x0
    first = min(int(np.searchsorted(sx, x0, side="left")), len(sx) - 1)
    pos = int(np.searchsorted(sx, sx[first], side="right")) - 1
    return float(pava_value_at(np.ascontiguousarray(s.ys), pos))
