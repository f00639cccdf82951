"""Triangular-array regression models ``Y = f_n(X) + xi`` and their limit drifts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidDrift, InvalidInput
from .limit_law import (
    Asymmetric,
    Custom,
    DriftSpec,
    NearFlat,
    Rate,
    SlowVarying,
    WrightPoly,
    make_drift,
)
from .rng import rng_for


# ---------------------------------------------------------------------------
# Covariates and noise


@dataclass(frozen=True)
class Uniform:
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidInput("uniform support needs lo < hi")

    def sample(self, rng, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, n)

    def density(self, x: float) -> float:
        return 1.0 / (self.hi - self.lo) if self.lo <= x <= self.hi else 0.0

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)


@dataclass(frozen=True)
class Gaussian:
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidInput("sigma must be non-negative")

    def sd(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.sigma)


def default_sigma_fn(x):
    return 1.0 + np.asarray(x, dtype=float) ** 2 / 2.0


@dataclass(frozen=True)
class Heteroscedastic:
    """Gaussian noise with standard deviation ``sigma_fn(x)``."""

    sigma_fn: Callable = default_sigma_fn

    def sd(self, x):
        return np.asarray(self.sigma_fn(np.asarray(x, dtype=float)), dtype=float)


# ---------------------------------------------------------------------------
# Mean functions


@dataclass(frozen=True)
class FromDrift:
    """``alpha0 + sqrt(s_n / n) psi(s_n (x - x0))`` with ``s_n`` from the drift's rate."""

    drift: DriftSpec
    alpha0: float = 0.0
    x0: float = 0.0


@dataclass(frozen=True)
class Explicit:
    """Closed-form means that do not come from a drift construction.

    ``"near_flat"`` is ``x / n^(1/5) + x^3 / 6``; ``"wright_fixed"`` is the
    fixed ``A |x - x0|^theta sign(x - x0)``.
    """

    tag: str
    theta: float = 1.0
    A: float = 1.0
    x0: float = 0.0

    def __post_init__(self):
        if self.tag not in ("near_flat", "wright_fixed"):
            raise InvalidInput(f"unknown explicit mean {self.tag!r}")


def mean_from_drift(drift: DriftSpec, alpha0: float, x0: float, n: int) -> Callable:
    if n < 1:
        raise InvalidInput("n must be at least 1")
    if isinstance(drift.kind, Asymmetric) and not drift.kind.is_finite:
        raise InvalidDrift("an infinite local shape cannot define a finite-n mean")
    s = drift.rate(n)
    amp = math.sqrt(s / n)

    def f(x):
        return alpha0 + amp * drift.psi(s * (np.asarray(x, dtype=float) - x0))

    return f


def mean_near_flat_example(n: int) -> Callable:
    if n < 1:
        raise InvalidInput("n must be at least 1")
    slope = float(n) ** -0.2

    def f(x):
        x = np.asarray(x, dtype=float)
        return x * slope + x**3 / 6.0

    return f


def mean_wright_fixed(theta: float, A: float = 1.0, x0: float = 0.0) -> Callable:
    def f(x):
        d = np.asarray(x, dtype=float) - x0
        return A * np.sign(d) * np.abs(d) ** theta

    return f


# ---------------------------------------------------------------------------
# DGPs


@dataclass(frozen=True)
class DgpSpec:
    mean_fn: object
    n: int
    covariate: Uniform = field(default_factory=Uniform)
    noise: object = field(default_factory=Gaussian)
    x0: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInput("n must be at least 1")
        if not self.covariate.lo < self.x0 < self.covariate.hi:
            raise InvalidInput("x0 must be interior to the covariate support")

    def mean(self) -> Callable:
        m = self.mean_fn
        if isinstance(m, FromDrift):
            return mean_from_drift(m.drift, m.alpha0, m.x0, self.n)
        if m.tag == "near_flat":
            return mean_near_flat_example(self.n)
        return mean_wright_fixed(m.theta, m.A, m.x0)

    def with_n(self, n: int) -> "DgpSpec":
        return DgpSpec(self.mean_fn, n, self.covariate, self.noise, self.x0)


@dataclass(frozen=True)
class RawSample:
    xs: np.ndarray
    ys: np.ndarray
    seed: object
    truth_at_x0: float

    def __len__(self):
        return len(self.xs)

    @property
    def pairs(self) -> np.ndarray:
        return np.column_stack((self.xs, self.ys))

    def shifted(self, c: float) -> "RawSample":
        return RawSample(self.xs, self.ys + c, self.seed, self.truth_at_x0 + c)


def draw(dgp: DgpSpec, seed) -> RawSample:
    """``n`` iid pairs; ``seed`` may be an int or a tuple of stream keys."""
    keys = seed if isinstance(seed, tuple) else (seed,)
    rng = rng_for("dgp", *keys)
    f = dgp.mean()
    xs = dgp.covariate.sample(rng, dgp.n)
    ys = f(xs) + dgp.noise.sd(xs) * rng.standard_normal(dgp.n)
    return RawSample(xs, ys, seed, float(f(dgp.x0)))


def check_A3(dgp: DgpSpec, drift: DriftSpec, c: float, n_grid: Sequence[int]):
    """Local shape ``sqrt(n/s_n) (f_n(x0 + c/s_n) - f_n(x0))`` along ``n_grid``.

    Returns rows ``(n, psi_n(c), psi_n(c) - psi(c))``.
    """
    if c == 0:
        raise InvalidInput("c must be non-zero")
    target = float(drift.psi(np.array([c]))[0])
    rows = []
    for n in n_grid:
        f = dgp.with_n(int(n)).mean()
        s = drift.rate(n)
        x0 = dgp.x0
        val = math.sqrt(n / s) * float(f(x0 + c / s) - f(x0))
        rows.append((int(n), val, val - target))
    return rows


# ---------------------------------------------------------------------------
# Named families used by the studies


def psi3(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, x**2 / 2.0, x**3 / 3.0)


def psi4(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) > 0.1, np.sign(x), 0.0)


SHAPES = {
    "psi1": lambda: WrightPoly(1.0, 1.0),
    "psi2": lambda: Asymmetric(0.5, 1.0, 1.0, 1.0),
    "psi3": lambda: Custom(psi3, Rate.power(1.0 / 3.0), "psi3"),
    "psi4": lambda: Custom(psi4, Rate.power(1.0 / 3.0), "psi4"),
}

DGP_NAMES = ("wright", "slowvar", "asym", "nearflat", "rates", *SHAPES)


@dataclass(frozen=True)
class NamedDgp:
    """A DGP together with the drift of its limit law at ``x0``."""

    name: str
    dgp: DgpSpec
    drift: DriftSpec

    @property
    def rate(self) -> Rate:
        return self.drift.rate


def named_dgp(
    name: str,
    n: int,
    theta: float = 2.0,
    A: float = 1.0,
    alpha: Optional[float] = None,
    heteroscedastic: bool = False,
    sigma: float = 1.0,
) -> NamedDgp:
    """Build one of the study families on ``X ~ U(-1, 1)``, ``x0 = 0``.

    ``wright`` is the fixed ``A |x|^theta sign x``; the others follow the
    drift construction and change with ``n``. ``rates`` uses
    ``psi(x) = x^2 sign x`` with ``s_n = n^alpha``.
    """
    cov = Uniform()
    noise = Heteroscedastic() if heteroscedastic else Gaussian(sigma)
    x0 = 0.0
    h0 = cov.density(x0)
    s0_sq = float(noise.sd(np.array([x0]))[0]) ** 2
    if s0_sq == 0:
        s0_sq = 1.0  # noiseless: the limit drift is unused
    if name == "wright":
        drift = make_drift(WrightPoly(A, theta), h0, s0_sq)
        mean = Explicit("wright_fixed", theta=theta, A=A, x0=x0)
    elif name == "nearflat":
        drift = make_drift(NearFlat((1.0,)), h0, s0_sq, Rate.power(0.2))
        mean = Explicit("near_flat")
    else:
        if name == "slowvar":
            kind = SlowVarying(A, theta)
            rate = None
        elif name == "asym":
            kind = Asymmetric(1.0, 1.0, 1.0 / 3.0, 1.0)
            rate = None
        elif name == "rates":
            if alpha is None:
                raise InvalidInput("the rates family needs alpha")
            kind = WrightPoly(1.0, 2.0)
            rate = Rate.power(alpha)
        elif name in SHAPES:
            kind = SHAPES[name]()
            rate = Rate.power(1.0 / 3.0)
        else:
            raise InvalidInput(f"unknown dgp {name!r}; choose from {DGP_NAMES}")
        drift = make_drift(kind, h0, s0_sq, rate)
        mean = FromDrift(drift, 0.0, x0)
    return NamedDgp(name, DgpSpec(mean, n, cov, noise, x0), drift)
