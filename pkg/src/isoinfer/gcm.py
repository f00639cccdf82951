"""Greatest convex minorants of polylines and their left slopes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import lower_hull_indices
from .errors import InvalidInput, OutOfDomain
from .isotonic import SortedSample, StepFunction, _step_from_blocks


@dataclass(frozen=True)
class PolyLine:
    ts: np.ndarray
    vs: np.ndarray

    def __post_init__(self):
        if len(self.ts) != len(self.vs):
            raise InvalidInput("ts and vs must have equal length")
        if len(self.ts) < 2:
            raise InvalidInput("a polyline needs at least two points")
        if np.any(np.diff(self.ts) <= 0):
            raise InvalidInput("ts must be strictly increasing")

    @classmethod
    def of(cls, ts, vs) -> "PolyLine":
        return cls(np.ascontiguousarray(ts, dtype=float), np.ascontiguousarray(vs, dtype=float))

    def negated(self) -> "PolyLine":
        return PolyLine(self.ts, -self.vs)


@dataclass(frozen=True)
class ConvexHullMinorant:
    vertex_idx: np.ndarray
    slopes: np.ndarray

    def values_on(self, line: PolyLine) -> np.ndarray:
        """The minorant evaluated at every abscissa of ``line``."""
        v = self.vertex_idx
        return np.interp(line.ts, line.ts[v], line.vs[v])


def lower_hull(line: PolyLine) -> ConvexHullMinorant:
    idx = lower_hull_indices(line.ts, line.vs)
    t = line.ts[idx]
    v = line.vs[idx]
    return ConvexHullMinorant(idx, np.diff(v) / np.diff(t))


def left_slope(hull: ConvexHullMinorant, line: PolyLine, t0: float) -> float:
    """Slope of the hull segment whose half-open interval ``(a, b]`` holds t0."""
    ts = line.ts
    if not (ts[0] < t0 <= ts[-1]):
        raise OutOfDomain(f"t0={t0} outside ({ts[0]}, {ts[-1]}]")
    j = int(np.searchsorted(ts[hull.vertex_idx], t0, side="left"))
    return float(hull.slopes[j - 1])


def sl_gcm(line: PolyLine, t0: float) -> float:
    return left_slope(lower_hull(line), line, t0)


def sl_lcm(line: PolyLine, t0: float) -> float:
    """Left slope of the least concave majorant, via negation."""
    neg = line.negated()
    return -left_slope(lower_hull(neg), neg, t0)


def cusum_line(sample: SortedSample) -> PolyLine:
    n = len(sample)
    ts = np.arange(n + 1) / n
    vs = np.concatenate(([0.0], np.cumsum(sample.ys))) / n
    return PolyLine.of(ts, vs)


def isotonic_via_cusum(sample: SortedSample) -> StepFunction:
    """Isotonic fit as left slopes of the CUSUM diagram's convex minorant."""
    line = cusum_line(sample)
    hull = lower_hull(line)
    # hull vertices other than the origin are the block ends
    ends = hull.vertex_idx[1:]
    levels = hull.slopes
    return _step_from_blocks(sample.xs, levels, ends)


def cusum_fitted(sample: SortedSample) -> np.ndarray:
    """Fitted vector from the CUSUM route, one value per sample position."""
    hull = lower_hull(cusum_line(sample))
    sizes = np.diff(hull.vertex_idx)
    return np.repeat(hull.slopes, sizes)
