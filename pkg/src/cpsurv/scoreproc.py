"""Rescaled time axis and the standardized score process at beta = 0.

On the rescaled axis the i-th failure sits at ``i/k`` and censorings are
spread evenly between the failures that bracket them. The process
accumulates, at each of the first ``k`` failures, the covariate residual
``z - E_0(Z | x)`` divided by ``sqrt(V_0(Z | x))`` and by ``sqrt(k)``.
Under a piecewise-constant log hazard ratio its drift is piecewise linear,
with slope proportional to the coefficient on each piece.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .core import DataError, DegenerateVarianceError, SurvivalSample, event_moments

__all__ = [
    "DEFAULT_EPSILON",
    "RescaledSample",
    "ScorePath",
    "choose_k",
    "rescale_times",
    "standardized_score_path",
    "interpolate",
    "usable_event_count",
    "detection_path",
]

# margin below the observed event fraction for the deterministic grid size
DEFAULT_EPSILON = 0.05


@dataclass(frozen=True, eq=False)
class RescaledSample:
    """Rescaled times in original record order plus the event back-map."""

    k: int
    phi: np.ndarray
    failure_times: np.ndarray  # failure_times[i-1] is the i-th failure time

    def failure_time(self, rank: int) -> float:
        if not 1 <= rank <= len(self.failure_times):
            raise IndexError(f"event rank {rank} out of range")
        return float(self.failure_times[rank - 1])


@dataclass(frozen=True, eq=False)
class ScorePath:
    k: int
    values: np.ndarray  # length k + 1, values[0] == 0
    event_times: np.ndarray  # length k, time of grid point i is event_times[i-1]

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.k + 1) / self.k

    def time_at(self, index: int) -> float:
        if not 1 <= index <= self.k:
            raise IndexError(f"grid index {index} has no failure time")
        return float(self.event_times[index - 1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("index", "t", "u", "event_time"))
        for row in self.rows():
            w.writerow(row)
        return buf.getvalue()

    def rows(self):
        for i, (t, u) in enumerate(zip(self.grid, self.values)):
            et = "" if i == 0 else repr(float(self.event_times[i - 1]))
            yield i, repr(float(t)), repr(float(u)), et


def choose_k(sample: SurvivalSample, mode: str = "observed", epsilon: float = DEFAULT_EPSILON) -> int:
    """Grid size: all events (``observed``) or ``floor(n (k_obs/n - eps))``.

    The deterministic value is clipped to ``[2, k_obs]``.
    """
    k_obs = sample.n_events
    if k_obs < 2:
        raise DataError(f"need at least 2 events, found {k_obs}")
    if mode == "observed":
        return k_obs
    if mode == "deterministic":
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        k = math.floor(k_obs - sample.n * epsilon + 1e-9)
        return int(min(max(k, 2), k_obs))
    raise ValueError(f"unknown k mode {mode!r}")


def rescale_times(sample: SurvivalSample, k: int) -> RescaledSample:
    """Map observed times onto the event grid ``{1/k, 2/k, ...}``.

    A record in the block of the j-th failure (that failure plus the
    censorings before the next one) goes to ``(j + c/m) / k``, where ``m``
    is the block size and ``c`` counts block members with strictly smaller
    time. Censorings before the first failure form block 0 and are spread
    over ``(0, 1/k)`` at ``r / (m + 1) / k``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    xs = sample.sorted_time
    ds = sample.sorted_status
    nbar = np.cumsum(ds)  # failures up to and including each sorted position
    phi_sorted = np.empty(sample.n)
    for g in np.unique(nbar):
        pos = np.flatnonzero(nbar == g)
        bx = xs[pos]
        m = len(pos)
        if g == 0:
            rank = np.arange(1, m + 1)
            # ties share the position of their first member
            first = np.searchsorted(bx, bx, side="left")
            phi_sorted[pos] = rank[first] / ((m + 1) * k)
        else:
            before = np.searchsorted(bx, bx, side="left")
            # one rounding per value, so simple fractions come out exact
            num = np.where(ds[pos] == 1, g * m, g * m + before)
            phi_sorted[pos] = num / (m * k)
    phi = np.empty(sample.n)
    phi[sample.order] = phi_sorted
    return RescaledSample(k=k, phi=phi, failure_times=sample.event_times.copy())


def usable_event_count(sample: SurvivalSample) -> int:
    """Number of leading failures whose risk set has positive variance at 0.

    Risk sets are nested, so once the variance vanishes it stays zero.
    """
    _, _, var = event_moments(sample, [0.0])
    bad = np.flatnonzero(var[0] <= 0)
    return int(bad[0]) if bad.size else sample.n_events


def standardized_score_path(sample: SurvivalSample, k: int) -> ScorePath:
    """Standardized score process at beta = 0 over the first ``k`` failures."""
    if not 2 <= k <= sample.n_events:
        raise ValueError(f"k must lie in [2, {sample.n_events}], got {k}")
    _, mean, var = event_moments(sample, [0.0])
    mean, var = mean[0, :k], var[0, :k]
    zev = sample.event_covariates[:k]
    bad = np.flatnonzero(var <= 0)
    if bad.size:
        i = int(bad[0])
        raise DegenerateVarianceError(
            f"zero covariate variance in the risk set of failure {i + 1} "
            f"(time {sample.event_times[i]!r}); use a smaller k"
        )
    inc = (zev - mean) / np.sqrt(var) / math.sqrt(k)
    values = np.concatenate(([0.0], np.cumsum(inc)))
    return ScorePath(k=k, values=values, event_times=sample.event_times[:k].copy())


def detection_path(sample: SurvivalSample, mode: str = "observed",
                   epsilon: float = DEFAULT_EPSILON) -> ScorePath:
    """Score path on ``choose_k`` failures, trimmed to the usable ones.

    Trailing failures whose risk set has zero covariate variance (always
    the last failure of uncensored data) cannot be standardized and are
    dropped from the grid.
    """
    k = min(choose_k(sample, mode, epsilon), usable_event_count(sample))
    if k < 2:
        raise DegenerateVarianceError("fewer than 2 failures with positive risk-set variance")
    return standardized_score_path(sample, k)


def interpolate(path: ScorePath, t):
    """Linear interpolation of the path at ``t`` in [0, 1]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any((t_arr < 0) | (t_arr > 1)) or np.any(np.isnan(t_arr)):
        raise ValueError("t must lie in [0, 1]")
    out = np.interp(t_arr * path.k, np.arange(path.k + 1), path.values)
    return float(out) if out.ndim == 0 else out
