"""Single-changepoint Cox model: profile likelihood and confidence region.

For each candidate changepoint ``g`` (a failure time) the coefficients on
``(0, g]`` and ``(g, inf)`` are fitted separately. The estimate maximises
the summed log partial likelihood over candidates. The confidence region
keeps every candidate whose standardized statistic
``S(g) = sqrt(n V(g)) * beta_hat(g)`` satisfies ``S(g)^2 > M^2 - q``, where
``M`` is the sup of ``S`` and ``q`` the upper-alpha chi-square(1) quantile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import DataError, NumericalError, SurvivalSample, event_moments
from .coxfit import TimeWindow, fit_cox_many

__all__ = [
    "DEFAULT_MIN_EVENTS",
    "ProfilePath",
    "SingleCpFit",
    "ChangepointRegion",
    "profile_fit",
    "estimate_single_changepoint",
    "confidence_region",
    "region_report",
]

DEFAULT_MIN_EVENTS = 5


@dataclass(frozen=True, eq=False)
class ProfilePath:
    """Per-candidate fits; arrays are aligned with ``candidates``."""

    n: int
    candidates: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    se1: np.ndarray
    se2: np.ndarray
    loglik: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    flagged: np.ndarray

    @property
    def s1(self) -> np.ndarray:
        return math.sqrt(self.n) * np.sqrt(self.v1) * self.beta1

    @property
    def s2(self) -> np.ndarray:
        return math.sqrt(self.n) * np.sqrt(self.v2) * self.beta2


@dataclass(frozen=True)
class SingleCpFit:
    gamma_hat: float
    beta1_hat: float
    beta2_hat: float
    se1: float
    se2: float
    loglik: float
    index: int  # position in the profile's candidate array


@dataclass(frozen=True)
class ChangepointRegion:
    fit: SingleCpFit
    alpha: float
    statistic_used: str
    m_value: float
    threshold: float
    members: tuple[float, ...]
    next_failure: float = math.inf  # first failure time after the hull

    @property
    def interval_hull(self) -> tuple[float, float]:
        return (min(self.members), max(self.members))

    @property
    def width(self) -> float:
        lo, hi = self.interval_hull
        return hi - lo

    def covers(self, gamma: float) -> bool:
        """Whether a changepoint at ``gamma`` is in the region.

        A candidate ``g`` stands for every changepoint in ``[g, next failure)``,
        since those all split the events identically.
        """
        lo, _ = self.interval_hull
        return lo <= gamma < self.next_failure


def profile_fit(sample: SurvivalSample, min_events_per_side: int = DEFAULT_MIN_EVENTS) -> ProfilePath:
    """Fit both sides at every failure time leaving enough events on each side."""
    if min_events_per_side < 1:
        raise ValueError("min_events_per_side must be at least 1")
    etimes = sample.event_times
    if len(etimes) < 2 * min_events_per_side:
        raise DataError(
            f"{len(etimes)} events; need at least {2 * min_events_per_side}"
        )
    cand = np.unique(etimes)
    left = np.searchsorted(etimes, cand, side="right")
    keep = (left >= min_events_per_side) & (len(etimes) - left >= min_events_per_side)
    cand = cand[keep]
    if cand.size == 0:
        raise DataError("no candidate changepoint leaves enough events on both sides")
    windows = [TimeWindow(0.0, g) for g in cand] + [TimeWindow(g) for g in cand]
    fits = fit_cox_many(sample, windows)
    c = len(cand)
    f1, f2 = fits[:c], fits[c:]
    # information at 0 on each side from one pass over the events
    _, _, var0 = event_moments(sample, [0.0])
    cum = np.concatenate(([0.0], np.cumsum(var0[0])))
    idx = np.searchsorted(etimes, cand, side="right")
    v1 = cum[idx] / sample.n
    v2 = (cum[-1] - cum[idx]) / sample.n
    return ProfilePath(
        n=sample.n,
        candidates=cand,
        beta1=np.array([f.beta_hat for f in f1]),
        beta2=np.array([f.beta_hat for f in f2]),
        se1=np.array([f.std_err for f in f1]),
        se2=np.array([f.std_err for f in f2]),
        loglik=np.array([a.loglik + b.loglik for a, b in zip(f1, f2)]),
        v1=v1,
        v2=v2,
        flagged=np.array([not (a.ok and b.ok) for a, b in zip(f1, f2)]),
    )


def _best(profile: ProfilePath) -> SingleCpFit:
    ok = np.flatnonzero(~profile.flagged)
    if ok.size == 0:
        raise NumericalError("every candidate changepoint failed to converge")
    # argmax returns the first maximiser, i.e. the smallest candidate
    i = int(ok[np.argmax(profile.loglik[ok])])
    return SingleCpFit(
        gamma_hat=float(profile.candidates[i]),
        beta1_hat=float(profile.beta1[i]),
        beta2_hat=float(profile.beta2[i]),
        se1=float(profile.se1[i]),
        se2=float(profile.se2[i]),
        loglik=float(profile.loglik[i]),
        index=i,
    )


def estimate_single_changepoint(sample: SurvivalSample, min_events_per_side: int = DEFAULT_MIN_EVENTS,
                                profile: ProfilePath | None = None) -> SingleCpFit:
    """Profile maximum partial likelihood estimate of the changepoint."""
    if profile is None:
        profile = profile_fit(sample, min_events_per_side)
    return _best(profile)


def confidence_region(sample: SurvivalSample, alpha: float = 0.05,
                      min_events_per_side: int = DEFAULT_MIN_EVENTS,
                      profile: ProfilePath | None = None) -> ChangepointRegion:
    """Approximate ``1 - alpha`` confidence set for the changepoint.

    The statistic of the side with the larger estimated coefficient at
    the profile maximiser is used. Flagged candidates take no part.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if profile is None:
        profile = profile_fit(sample, min_events_per_side)
    best = _best(profile)
    if best.beta1_hat > best.beta2_hat:
        name, s = "M1", profile.s1
    else:
        name, s = "M2", profile.s2
    ok = ~profile.flagged
    m = float(np.max(s[ok]))
    q = float(stats.chi2.isf(alpha, df=1))
    # S^2 > M^2 - q, written so the maximiser (gap 0) stays in for tiny q
    inside = ok & (m * m - s * s < q)
    assert inside[ok][np.argmax(s[ok])]
    members = tuple(float(g) for g in profile.candidates[inside])
    later = sample.event_times[sample.event_times > members[-1]]
    return ChangepointRegion(
        fit=best, alpha=alpha, statistic_used=name, m_value=m,
        threshold=m * m - q, members=members,
        next_failure=float(later[0]) if later.size else math.inf,
    )


def region_report(region: ChangepointRegion) -> dict:
    f = region.fit
    return {
        "gamma_hat": f.gamma_hat,
        "beta1": f.beta1_hat,
        "beta2": f.beta2_hat,
        "se1": f.se1,
        "se2": f.se2,
        "loglik": f.loglik,
        "alpha": region.alpha,
        "statistic": region.statistic_used,
        "m_value": region.m_value,
        "threshold": region.threshold,
        "hull": list(region.interval_hull),
        "members": list(region.members),
    }
