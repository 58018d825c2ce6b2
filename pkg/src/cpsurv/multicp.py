"""Multiple-changepoint detection by least-squares segmentation of the score path.

Each of the ``K`` segments gets its own intercept and slope (no continuity
constraint), regressing path values on the grid index. Breakpoints are
found by exact dynamic programming over all placements that respect the
minimum segment length; the coefficients are then re-estimated by partial
likelihood on each induced time window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DataError, StepFunction, SurvivalSample
from .coxfit import CoxFit, TimeWindow, fit_cox
from .scoreproc import RescaledSample, ScorePath

__all__ = [
    "DEFAULT_TRIM",
    "SegmentationResult",
    "MultiCpFit",
    "segment_rss",
    "rss_table",
    "min_segment_length",
    "detect_changepoints",
    "map_breakpoints_to_time",
    "fit_multi_model",
]

DEFAULT_TRIM = 0.15


@dataclass(frozen=True)
class SegmentationResult:
    K: int
    breakpoint_indices: tuple[int, ...]
    breakpoint_times: tuple[float, ...]
    total_rss: float
    segment_rss: tuple[float, ...]
    intercepts: tuple[float, ...]
    slopes: tuple[float, ...]
    min_length: int

    @property
    def bounds(self) -> list[tuple[int, int]]:
        """Inclusive grid index range of each segment."""
        ends = list(self.breakpoint_indices) + [None]
        starts = [0] + [b + 1 for b in self.breakpoint_indices]
        return list(zip(starts, ends))


@dataclass(frozen=True)
class MultiCpFit:
    changepoints: tuple[float, ...]
    fits: tuple[CoxFit, ...]

    @property
    def betas(self) -> tuple[float, ...]:
        return tuple(f.beta_hat for f in self.fits)

    @property
    def std_errs(self) -> tuple[float, ...]:
        return tuple(f.std_err for f in self.fits)

    @property
    def logliks(self) -> tuple[float, ...]:
        return tuple(f.loglik for f in self.fits)

    @property
    def step_function(self) -> StepFunction:
        return StepFunction(self.changepoints, self.betas)


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    slope = float(dx @ dy) / sxx
    resid = dy - slope * dx
    return float(ym - slope * xm), slope, float(resid @ resid)


def segment_rss(path: ScorePath | np.ndarray, i: int, j: int) -> float:
    """RSS of the straight-line fit to points ``i..j`` (inclusive)."""
    y = path.values if isinstance(path, ScorePath) else np.asarray(path, dtype=float)
    if j - i + 1 < 2:
        raise ValueError("a segment needs at least 2 points")
    if i < 0 or j >= len(y):
        raise IndexError("segment outside the path")
    x = np.arange(i, j + 1, dtype=float)
    return max(_ols(x, y[i:j + 1])[2], 0.0)


def rss_table(y: np.ndarray, min_len: int = 2) -> np.ndarray:
    """``T[i, j]`` = RSS of points ``i..j``; ``inf`` for segments shorter than ``min_len``.

    Prefix sums are taken on a locally centred abscissa per start ``i`` to
    limit cancellation.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    T = np.full((n, n), np.inf)
    yc = y - y.mean()
    cy = np.concatenate(([0.0], np.cumsum(yc)))
    cyy = np.concatenate(([0.0], np.cumsum(yc * yc)))
    idx = np.arange(n, dtype=float)
    cxy_full = np.concatenate(([0.0], np.cumsum(idx * yc)))
    for i in range(n - min_len + 1):
        j = np.arange(i + min_len - 1, n)
        m = (j - i + 1).astype(float)
        sy = cy[j + 1] - cy[i]
        syy = cyy[j + 1] - cyy[i]
        # x measured from i: x' = x - i
        sxy = (cxy_full[j + 1] - cxy_full[i]) - i * sy
        sx = m * (m - 1) / 2
        sxx = (m - 1) * m * (2 * m - 1) / 6
        Sxx = sxx - sx * sx / m
        Sxy = sxy - sx * sy / m
        Syy = syy - sy * sy / m
        T[i, j] = np.maximum(Syy - Sxy * Sxy / Sxx, 0.0)
    return T


def min_segment_length(n_points: int, trim: float) -> int:
    return max(2, math.ceil(trim * n_points))


def detect_changepoints(path: ScorePath | np.ndarray, K: int,
                        trim: float = DEFAULT_TRIM) -> SegmentationResult:
    """Globally optimal ``K``-segment piecewise-linear fit of the path.

    Parameters
    ----------
    path : ScorePath or array
        Values at grid indices ``0..k``.
    K : int
        Number of segments (``K - 1`` breakpoints), at least 2.
    trim : float
        Minimum segment length as a fraction of the number of points;
        never fewer than 2 points.

    Notes
    -----
    A breakpoint index is the last grid index of its segment. Among exact
    RSS ties the lexicographically smallest breakpoint vector is returned;
    the recursion runs over suffixes so that the forward reconstruction
    can take the first minimiser at each stage.
    """
    y = path.values if isinstance(path, ScorePath) else np.asarray(path, dtype=float)
    if K < 2:
        raise ValueError("K must be at least 2")
    n = len(y)
    h = min_segment_length(n, trim)
    if n < K * h:
        raise DataError(f"path of {n} points too short for {K} segments of length >= {h}")
    T = rss_table(y, h)
    # F[m, i]: best cost of splitting points i..n-1 into m segments
    F = np.full((K + 1, n + 1), np.inf)
    F[0, n] = 0.0
    F[1, :n] = T[:, n - 1]
    for m in range(2, K + 1):
        for i in range(n - m * h, -1, -1):
            ends = np.arange(i + h - 1, n - (m - 1) * h)
            F[m, i] = np.min(T[i, ends] + F[m - 1, ends + 1])
    bps: list[int] = []
    i = 0
    for m in range(K, 1, -1):
        ends = np.arange(i + h - 1, n - (m - 1) * h)
        costs = T[i, ends] + F[m - 1, ends + 1]
        e = int(ends[int(np.argmin(costs))])
        bps.append(e)
        i = e + 1
    starts = [0] + [b + 1 for b in bps]
    stops = bps + [n - 1]
    ints, slopes, rss = [], [], []
    for a, b in zip(starts, stops):
        x = np.arange(a, b + 1, dtype=float)
        c0, c1, r = _ols(x, y[a:b + 1])
        ints.append(c0)
        slopes.append(c1)
        rss.append(float(T[a, b]))
    times: tuple[float, ...] = ()
    if isinstance(path, ScorePath):
        times = tuple(path.time_at(b) for b in bps)
    return SegmentationResult(
        K=K,
        breakpoint_indices=tuple(bps),
        breakpoint_times=times,
        total_rss=float(F[K, 0]),
        segment_rss=tuple(rss),
        intercepts=tuple(ints),
        slopes=tuple(slopes),
        min_length=h,
    )


def map_breakpoints_to_time(result: SegmentationResult | Sequence[int],
                            rescaled: RescaledSample) -> tuple[float, ...]:
    """Grid index ``i`` -> the i-th original failure time."""
    idx = result.breakpoint_indices if isinstance(result, SegmentationResult) else result
    return tuple(rescaled.failure_time(int(i)) for i in idx)


def fit_multi_model(sample: SurvivalSample, changepoints: Sequence[float]) -> MultiCpFit:
    """Partial-likelihood coefficient on each window between changepoints."""
    cps = tuple(float(c) for c in changepoints)
    if any(b <= a for a, b in zip(cps, cps[1:])) or any(c <= 0 for c in cps):
        raise ValueError("changepoints must be positive and strictly increasing")
    edges = (0.0,) + cps + (math.inf,)
    windows = [TimeWindow(a, b) for a, b in zip(edges, edges[1:])]
    times = sample.event_times
    for w in windows:
        if not w.mask(times).any():
            raise DataError(f"no events in window {w.to_list()}")
    return MultiCpFit(changepoints=cps, fits=tuple(fit_cox(sample, w) for w in windows))
