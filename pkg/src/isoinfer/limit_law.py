"""Limit laws of the isotonic LSE at a point.

A limit law is the left slope at zero of the greatest convex minorant of
``B(t) + Psi(h0 t / sigma0^2)``, where ``B`` is two-sided Brownian motion and
``Psi`` integrates a non-decreasing local shape ``psi``. Laws are sampled by
simulating the process on a symmetric grid and reading off the hull slope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ._kernels import left_slope_at_index
from .errors import InvalidDrift, InvalidInput, WindowError
from .gcm import PolyLine
from .rng import rng_for
from .stats import ks_2samp_stat

INFINITE_DRIFT = 1e12
GUARD_FRACTION = 0.75


# ---------------------------------------------------------------------------
# Rates s_n


@dataclass(frozen=True)
class Rate:
    """Localisation rate ``s_n``.

    ``n ** exponent`` by default. With ``log_divisor`` set the rate carries a
    slowly varying factor, ``(sqrt(n) log(n) / log_divisor) ** (2 exponent)``,
    clamped below at 1.
    """

    exponent: float
    log_divisor: Optional[float] = None

    def __call__(self, n) -> float:
        n = float(n)
        if self.log_divisor is None:
            return n**self.exponent
        base = math.sqrt(n) * math.log(n) / self.log_divisor
        return max(1.0, base) ** (2.0 * self.exponent) if base > 0 else 1.0

    @classmethod
    def power(cls, exponent: float) -> "Rate":
        return cls(float(exponent))

    @classmethod
    def wright(cls, theta: float) -> "Rate":
        return cls(1.0 / (2.0 * theta + 1.0))

    @classmethod
    def slowly_varying(cls, theta: float) -> "Rate":
        return cls(1.0 / (2.0 * theta + 1.0), log_divisor=2.0 * theta + 1.0)


# ---------------------------------------------------------------------------
# Local shapes psi and their integrals Psi


def _signed_power(c, A, theta):
    c = np.asarray(c, dtype=float)
    return A * np.sign(c) * np.abs(c) ** theta


@dataclass(frozen=True)
class WrightPoly:
    A: float
    theta: float

    def psi(self, c):
        return _signed_power(c, self.A, self.theta)

    def Psi(self, t):
        t = np.asarray(t, dtype=float)
        return self.A * np.abs(t) ** (self.theta + 1.0) / (self.theta + 1.0)

    def default_rate(self) -> Rate:
        return Rate.wright(self.theta)

    @property
    def is_even(self) -> bool:
        return True


@dataclass(frozen=True)
class SlowVarying(WrightPoly):
    """Same local shape as :class:`WrightPoly`; only the rate gains a log factor."""

    def default_rate(self) -> Rate:
        return Rate.slowly_varying(self.theta)


@dataclass(frozen=True)
class Asymmetric:
    """Different power behaviour on each side of the point.

    The limit keeps the dominant (larger) exponent; the side with the smaller
    exponent becomes infinitely steep, represented by :data:`INFINITE_DRIFT`.
    """

    A1: float
    theta1: float
    A2: float
    theta2: float

    @property
    def theta(self) -> float:
        return max(self.theta1, self.theta2)

    def psi(self, c):
        c = np.asarray(c, dtype=float)
        th = self.theta
        right = np.inf if self.theta1 < self.theta2 else self.A1 * np.abs(c) ** th
        left = -np.inf if self.theta1 > self.theta2 else -self.A2 * np.abs(c) ** th
        out = np.where(c > 0, right, np.where(c < 0, left, 0.0))
        return out

    def Psi(self, t):
        t = np.asarray(t, dtype=float)
        th = self.theta
        p = np.abs(t) ** (th + 1.0) / (th + 1.0)
        right = INFINITE_DRIFT if self.theta1 < self.theta2 else self.A1 * p
        left = INFINITE_DRIFT if self.theta1 > self.theta2 else self.A2 * p
        return np.where(t > 0, right, np.where(t < 0, left, 0.0))

    def default_rate(self) -> Rate:
        return Rate.wright(self.theta)

    @property
    def is_even(self) -> bool:
        return self.theta1 == self.theta2 and self.A1 == self.A2

    @property
    def is_finite(self) -> bool:
        return self.theta1 == self.theta2


@dataclass(frozen=True)
class NearFlat:
    """Polynomial shape ``psi(c) = sum_j a_j c^j / j!`` with ``a = (a_1, a_2, ...)``."""

    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(a) for a in self.coeffs))
        if not any(a != 0 for a in self.coeffs):
            raise InvalidDrift("near-flat shape needs a non-zero coefficient")

    def psi(self, c):
        c = np.asarray(c, dtype=float)
        return sum(a * c**j / math.factorial(j) for j, a in enumerate(self.coeffs, start=1))

    def Psi(self, t):
        t = np.asarray(t, dtype=float)
        return sum(a * t ** (j + 1) / math.factorial(j + 1) for j, a in enumerate(self.coeffs, start=1))

    def default_rate(self) -> Rate:
        j0 = next(j for j, a in enumerate(self.coeffs, start=1) if a != 0)
        return Rate.wright(j0)

    @property
    def is_even(self) -> bool:
        return all(a == 0 for j, a in enumerate(self.coeffs, start=1) if j % 2 == 0)


@dataclass(frozen=True)
class Custom:
    """User-supplied non-decreasing ``psi``; ``Psi`` is integrated numerically.

    ``psi`` must accept and return numpy arrays.
    """

    psi_fn: Callable
    rate: Optional[Rate] = None
    name: str = "custom"

    def psi(self, c):
        return np.asarray(self.psi_fn(np.asarray(c, dtype=float)), dtype=float)

    def Psi(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.array([_integrate_psi(self.psi_fn, float(u)) for u in t.ravel()])
        return out.reshape(t.shape)

    def Psi_on_grid(self, step: float, count: int):
        """Psi at ``k * step`` for ``k = -count..count`` by cumulative integration."""
        return _cumulative_Psi(self.psi_fn, step, count)

    def default_rate(self) -> Rate:
        if self.rate is None:
            raise InvalidDrift("custom drift needs an explicit rate")
        return self.rate

    @property
    def is_even(self) -> bool:
        c = np.linspace(0.01, 10.0, 200)
        return bool(np.allclose(self.psi(-c), -self.psi(c), rtol=0, atol=1e-12))


SIMPSON_TOL = 1e-9
_SIMPSON_MAX_DEPTH = 80
_SIMPSON_MIN_WIDTH = 1e-13


def _simpson(f, a, b, fa, fm, fb):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f, edges, tol: float = SIMPSON_TOL) -> np.ndarray:
    """Integral of ``f`` over each cell ``[edges[k], edges[k+1]]``.

    Vectorised adaptive Simpson: every cell starts with a share of the
    absolute tolerance proportional to its width and is bisected until the
    Richardson error estimate meets its share.
    """
    g = f
    f = lambda x: np.asarray(g(x), dtype=float) + np.zeros_like(x)  # noqa: E731
    edges = np.asarray(edges, dtype=float)
    ncell = len(edges) - 1
    out = np.zeros(ncell)
    owner = np.arange(ncell)
    a, b = edges[:-1].copy(), edges[1:].copy()
    total = max(float(np.sum(np.abs(b - a))), np.finfo(float).tiny)
    cell_tol = tol * np.abs(b - a) / total
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson(f, a, b, fa, fm, fb)
    for _ in range(_SIMPSON_MAX_DEPTH):
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = _simpson(f, a, m, fa, flm, fm)
        right = _simpson(f, m, b, fm, frm, fb)
        err = left + right - whole
        # cells straddling a jump of psi stop once they are negligibly narrow
        done = (np.abs(err) <= 15.0 * cell_tol) | (b - a < _SIMPSON_MIN_WIDTH)
        np.add.at(out, owner[done], (left + right + err / 15.0)[done])
        keep = ~done
        if not np.any(keep):
            return out
        # bisect the unfinished cells
        owner = np.concatenate((owner[keep], owner[keep]))
        a, b = np.concatenate((a[keep], m[keep])), np.concatenate((m[keep], b[keep]))
        fa, fb = np.concatenate((fa[keep], fm[keep])), np.concatenate((fm[keep], fb[keep]))
        fm = np.concatenate((flm[keep], frm[keep]))
        whole = np.concatenate((left[keep], right[keep]))
        cell_tol = np.concatenate((cell_tol[keep], cell_tol[keep])) / 2.0
        m = 0.5 * (a + b)
    np.add.at(out, owner, whole)
    return out


def _integrate_psi(psi_fn, u: float) -> float:
    if u == 0:
        return 0.0
    val = float(adaptive_simpson(psi_fn, [min(0.0, u), max(0.0, u)])[0])
    return val if u > 0 else -val


def _cumulative_Psi(psi_fn, step: float, count: int) -> np.ndarray:
    edges = step * np.arange(count + 1)
    right = adaptive_simpson(psi_fn, edges)
    left = adaptive_simpson(psi_fn, -edges[::-1])[::-1]
    # Psi(t) = -int_t^0 psi for t < 0, and psi <= 0 there, so Psi >= 0
    return np.concatenate((np.cumsum(-left)[::-1], [0.0], np.cumsum(right)))


KINDS = (WrightPoly, SlowVarying, Asymmetric, NearFlat, Custom)


# ---------------------------------------------------------------------------
# Drift definitions


@dataclass(frozen=True)
class DriftSpec:
    """Drift ``amplitude * Psi(h0 t / sigma0_sq)`` of the limiting process."""

    kind: object
    h0: float
    sigma0_sq: float
    rate: Rate
    amplitude: float = 1.0

    @property
    def scale(self) -> float:
        return self.h0 / self.sigma0_sq

    def psi(self, c):
        return self.kind.psi(c)

    def Psi(self, t):
        return self.kind.Psi(t)

    def drift(self, t):
        return self.amplitude * self.kind.Psi(self.scale * np.asarray(t, dtype=float))

    def drift_on_grid(self, step: float, count: int) -> np.ndarray:
        """Drift at ``k * step``, ``k = -count..count``."""
        if isinstance(self.kind, Custom):
            return self.amplitude * self.kind.Psi_on_grid(self.scale * step, count)
        return self.drift(step * np.arange(-count, count + 1))

    @property
    def is_even(self) -> bool:
        return self.kind.is_even

    def rescaled(self, D: float) -> "DriftSpec":
        """Drift of ``B(t) + sqrt(D) Psi(h0 t / (D sigma0_sq))``."""
        return replace(self, sigma0_sq=self.sigma0_sq * D, amplitude=self.amplitude * math.sqrt(D))


def make_drift(kind, h0: float = 0.5, sigma0_sq: float = 1.0, rate: Optional[Rate] = None) -> DriftSpec:
    if not isinstance(kind, KINDS):
        raise InvalidDrift(f"unknown drift kind {kind!r}")
    if h0 <= 0 or sigma0_sq <= 0:
        raise InvalidDrift("h0 and sigma0_sq must be positive")
    if isinstance(kind, (WrightPoly, SlowVarying)) and (kind.A <= 0 or kind.theta <= 0):
        raise InvalidDrift("A and theta must be positive")
    if isinstance(kind, Asymmetric) and min(kind.A1, kind.A2, kind.theta1, kind.theta2) <= 0:
        raise InvalidDrift("asymmetric parameters must be positive")
    if isinstance(kind, (NearFlat, Custom)):
        _check_monotone(kind)
    return DriftSpec(kind, float(h0), float(sigma0_sq), rate or kind.default_rate())


def _check_monotone(kind, lim: float = 20.0, m: int = 4001):
    c = np.linspace(-lim, lim, m)
    vals = kind.psi(c)
    if not np.all(np.isfinite(vals)):
        raise InvalidDrift("psi must be finite on the probe grid")
    if abs(float(kind.psi(np.array([0.0]))[0])) > 1e-12:
        raise InvalidDrift("psi(0) must be 0")
    if np.any(np.diff(vals) < -1e-12 * (1 + np.abs(vals[1:]))):
        raise InvalidDrift("psi is not non-decreasing on the probe grid")


# ---------------------------------------------------------------------------
# Grids and path simulation


@dataclass(frozen=True)
class GridConfig:
    T: float
    n_pts: int = 2**14
    max_doublings: int = 3

    def __post_init__(self):
        if self.T <= 0 or self.n_pts < 1 or self.max_doublings < 0:
            raise InvalidInput("invalid grid configuration")

    @property
    def step(self) -> float:
        return self.T / self.n_pts

    def ts(self) -> np.ndarray:
        return self.step * np.arange(-self.n_pts, self.n_pts + 1)


def default_grid(drift: DriftSpec) -> GridConfig:
    return GridConfig(T=8.0 * max(1.0, drift.sigma0_sq / drift.h0))


def _brownian_from_increments(left, right):
    return np.concatenate((np.cumsum(left)[::-1], [0.0], np.cumsum(right)))


def simulate_path(drift: DriftSpec, grid: GridConfig, seed) -> PolyLine:
    """Drifted two-sided Brownian motion on the grid, anchored at 0."""
    rng = rng_for("path", seed)
    n, sd = grid.n_pts, math.sqrt(grid.step)
    right = rng.standard_normal(n) * sd
    left = rng.standard_normal(n) * sd
    vs = _brownian_from_increments(left, right) + drift.drift_on_grid(grid.step, n)
    return PolyLine(grid.ts(), vs)


# ---------------------------------------------------------------------------
# Sampling the limit law


@dataclass(frozen=True)
class EmpiricalLaw:
    draws: np.ndarray
    master_seed: int
    drift: DriftSpec
    grid: GridConfig
    doublings: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.draws)

    def quantile(self, p: float) -> float:
        return quantile(self, p)

    def mean(self) -> float:
        return float(np.mean(self.draws))

    def mean_se(self) -> float:
        return float(np.std(self.draws, ddof=1) / math.sqrt(len(self.draws)))

    def ks(self, other) -> float:
        other = other.draws if isinstance(other, EmpiricalLaw) else other
        return ks_2samp_stat(self.draws, other)


class _DriftCache:
    """Drift arrays per doubling level, computed once per sampling run."""

    def __init__(self, drift: DriftSpec, step: float):
        self.drift, self.step, self._cache = drift, step, {}

    def __call__(self, count: int) -> np.ndarray:
        if count not in self._cache:
            self._cache[count] = self.drift.drift_on_grid(self.step, count)
        return self._cache[count]


def _one_draw(drift_cache, grid: GridConfig, rng, index: int, stride: int = 1):
    """Slope at zero of one path; the window is extended outward when the
    covering hull segment reaches the outer quarter of the window.

    Returns ``(slope, doublings)``; with ``stride > 1`` returns one slope per
    sub-grid ``1, stride`` computed from the same path.
    """
    n, step = grid.n_pts, grid.step
    sd = math.sqrt(step)
    right = rng.standard_normal(n) * sd
    left = rng.standard_normal(n) * sd
    count = n
    for k in range(grid.max_doublings + 1):
        vs = _brownian_from_increments(left, right) + drift_cache(count)
        ts = step * np.arange(-count, count + 1)
        half = count * step
        slope, a, b = left_slope_at_index(ts, vs, count)
        ok = max(abs(ts[a]), abs(ts[b])) <= GUARD_FRACTION * half
        if ok:
            if stride == 1:
                return slope, k
            coarse = slice(count % stride, None, stride)
            c_slope, _, _ = left_slope_at_index(ts[coarse], vs[coarse], count // stride)
            return (slope, c_slope), k
        if k < grid.max_doublings:
            # Brownian motion is Markov: extending the existing path keeps
            # the inner segment and leaves the law unchanged
            right = np.concatenate((right, rng.standard_normal(count) * sd))
            left = np.concatenate((left, rng.standard_normal(count) * sd))
            count *= 2
    raise WindowError(index, half)


def _draw_block(drift, grid, master_seed, indices, stride=1):
    cache = _DriftCache(drift, grid.step)
    out, dbl = [], []
    for i in indices:
        s, k = _one_draw(cache, grid, rng_for(master_seed, int(i)), int(i), stride)
        out.append(s)
        dbl.append(k)
    return np.asarray(out), np.asarray(dbl)


def sample_slgcm_zero(
    drift: DriftSpec,
    grid: Optional[GridConfig] = None,
    n_draws: int = 10_000,
    master_seed: int = 0,
    workers: int = 1,
) -> EmpiricalLaw:
    """Monte Carlo draws of the slope at zero of the GCM of ``B + drift``.

    Draw ``i`` uses the stream keyed by ``(master_seed, i)``, so the result
    does not depend on ``workers``.
    """
    if n_draws < 1:
        raise InvalidInput("n_draws must be at least 1")
    grid = grid or default_grid(drift)
    idx = np.arange(n_draws)
    if workers <= 1:
        draws, dbl = _draw_block(drift, grid, master_seed, idx)
    else:
        from concurrent.futures import ProcessPoolExecutor

        chunks = np.array_split(idx, workers * 4)
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_draw_block, *zip(*[(drift, grid, master_seed, c) for c in chunks])))
        draws = np.concatenate([p[0] for p in parts])
        dbl = np.concatenate([p[1] for p in parts])
    return EmpiricalLaw(draws, master_seed, drift, grid, dbl)


def sample_grid_pair(drift: DriftSpec, grid: GridConfig, n_draws: int, master_seed: int = 0):
    """Draws on ``grid`` and, from the same paths, on the grid with twice the step."""
    pairs, _ = _draw_block(drift, grid, master_seed, np.arange(n_draws), stride=2)
    return pairs[:, 0], pairs[:, 1]


def quantile(law, p: float) -> float:
    """Order-statistic quantile with linear interpolation (Hazen plotting positions)."""
    if not (0.0 < p < 1.0):
        raise InvalidInput("p must lie in (0, 1)")
    draws = law.draws if isinstance(law, EmpiricalLaw) else np.asarray(law, dtype=float)
    if len(draws) == 0:
        raise InvalidInput("no draws")
    return float(np.quantile(draws, p, method="hazen"))


def quantile_se(draws, p: float, h: float = 0.02) -> float:
    """Monte Carlo standard error of a sample quantile (sparsity estimate)."""
    draws = np.asarray(draws, dtype=float)
    lo, hi = max(p - h, 1e-6), min(p + h, 1 - 1e-6)
    sparsity = (np.quantile(draws, hi) - np.quantile(draws, lo)) / (hi - lo)
    return float(sparsity * math.sqrt(p * (1 - p) / len(draws)))


def scaling_identity_check(
    drift: DriftSpec, D: float, n_draws: int = 20_000, seed: int = 0, grid_points: int = 2**14
) -> float:
    """KS distance between the law and its ``sqrt(D)``-rescaled representation."""
    if D <= 0:
        raise InvalidInput("D must be positive")
    a = sample_slgcm_zero(drift, _grid_with(drift, grid_points), n_draws, master_seed=_sub(seed, 0))
    other = drift.rescaled(D)
    b = sample_slgcm_zero(other, _grid_with(other, grid_points), n_draws, master_seed=_sub(seed, 1))
    return ks_2samp_stat(a.draws, math.sqrt(D) * b.draws)


def _grid_with(drift, n_pts):
    g = default_grid(drift)
    return replace(g, n_pts=n_pts)


def _sub(seed: int, k: int) -> int:
    return int(rng_for("subseed", seed, k).integers(2**62))


def chernoff_drift(theta: float) -> DriftSpec:
    """Drift ``|t|^(theta+1)``, the classical pivot law for power-type shapes."""
    return make_drift(WrightPoly(theta + 1.0, theta), h0=1.0, sigma0_sq=1.0)
