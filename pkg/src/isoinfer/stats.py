"""Small statistical helpers used by tests, studies and gates."""

import math

import numpy as np
from scipy import stats


def ks_2samp_stat(a, b) -> float:
    return float(stats.ks_2samp(np.asarray(a), np.asarray(b)).statistic)


def ks_critical(n: int, m: int, alpha: float = 0.001) -> float:
    """Asymptotic two-sample KS critical value, ``c(alpha) sqrt((n+m)/(n m))``."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))


def sign_test_pvalue(draws, center: float = 0.0) -> float:
    """Two-sided exact sign test of the median, ignoring exact ties."""
    d = np.asarray(draws) - center
    pos = int(np.sum(d > 0))
    neg = int(np.sum(d < 0))
    return float(stats.binomtest(pos, pos + neg, 0.5).pvalue)


def ols_slope(x, y):
    """Least-squares slope and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    slope = float(np.sum(xc * (y - y.mean())) / np.sum(xc**2))
    resid = y - y.mean() - slope * xc
    dof = max(len(x) - 2, 1)
    se = float(math.sqrt(np.sum(resid**2) / dof / np.sum(xc**2))) if len(x) > 2 else float("nan")
    return slope, se


def binomial_se(p: float, reps: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / reps)
