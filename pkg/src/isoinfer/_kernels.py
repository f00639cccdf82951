"""Compiled inner loops: PAVA block stack and monotone-chain lower hull."""

import numpy as np
from numba import njit

HULL_COLLINEAR_RTOL = 1e-12


@njit(cache=True)
def pava_blocks(y, w):
    """Weighted pool-adjacent-violators in one left-to-right pass.

    Returns ``(levels, ends, weights)`` for the final blocks, ``ends`` being
    exclusive end indices into ``y``.
    """
    n = y.shape[0]
    levels = np.empty(n)
    wsum = np.empty(n)
    ends = np.empty(n, dtype=np.int64)
    k = 0
    for i in range(n):
        levels[k] = y[i]
        wsum[k] = w[i]
        ends[k] = i + 1
        k += 1
        while k > 1 and levels[k - 1] <= levels[k - 2]:
            tw = wsum[k - 2] + wsum[k - 1]
            levels[k - 2] = (levels[k - 2] * wsum[k - 2] + levels[k - 1] * wsum[k - 1]) / tw
            wsum[k - 2] = tw
            ends[k - 2] = ends[k - 1]
            k -= 1
    return levels[:k].copy(), ends[:k].copy(), wsum[:k].copy()


@njit(cache=True)
def pava_value_at(y, pos):
    """Isotonic fit (unit weights) of ``y`` evaluated at index ``pos``."""
    levels, ends, _ = pava_blocks(y, np.ones(y.shape[0]))
    for j in range(ends.shape[0]):
        if pos < ends[j]:
            return levels[j]
    return levels[ends.shape[0] - 1]


@njit(cache=True)
def lower_hull_indices(t, v):
    """Vertex indices of the greatest convex minorant of the points (t, v).

    Interior points within a relative cross-product tolerance of a chord are
    treated as collinear and dropped.
    """
    n = t.shape[0]
    hull = np.empty(n, dtype=np.int64)
    k = 0
    for c in range(n):
        while k >= 2:
            a = hull[k - 2]
            b = hull[k - 1]
            lhs = (t[b] - t[a]) * (v[c] - v[a])
            rhs = (v[b] - v[a]) * (t[c] - t[a])
            scale = abs(lhs) + abs(rhs)
            if lhs - rhs <= HULL_COLLINEAR_RTOL * scale:
                k -= 1
            else:
                break
        hull[k] = c
        k += 1
    return hull[:k].copy()


@njit(cache=True)
def segment_at_index(hull, i0):
    """Position j >= 1 with hull[j-1] < i0 <= hull[j]."""
    lo = 1
    hi = hull.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if hull[mid] >= i0:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def left_slope_at_index(t, v, i0):
    """Left slope of the GCM at grid index ``i0`` plus the covering segment ends."""
    hull = lower_hull_indices(t, v)
    j = segment_at_index(hull, i0)
    a = hull[j - 1]
    b = hull[j]
    return (v[b] - v[a]) / (t[b] - t[a]), a, b
