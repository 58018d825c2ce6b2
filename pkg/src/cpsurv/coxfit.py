"""Cox partial likelihood restricted to a time window.

The window ``(lo, hi]`` selects which events contribute; risk sets are
always taken over the whole sample. Window ``(0, g]`` gives the
before-changepoint likelihood and ``(g, inf)`` the after-changepoint one,
and the two add up to the ordinary Cox log partial likelihood.

All quantities carry the ``1/n`` normalisation. Ties use the Breslow
convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .core import DegenerateVarianceError, SurvivalSample, event_moments

__all__ = [
    "TimeWindow",
    "CoxFit",
    "FULL",
    "log_partial_likelihood",
    "score",
    "information",
    "fit_cox",
    "fit_cox_many",
]

SCORE_TOL = 1e-8
MAX_ITER = 50
BETA_LIMIT = 50.0
MAX_HALVINGS = 40
# batch size cap, in (windows x subjects) matrix entries
_CHUNK = 2_000_000


@dataclass(frozen=True)
class TimeWindow:
    """Events with ``lo < x <= hi`` contribute."""

    lo: float = 0.0
    hi: float = math.inf

    def __post_init__(self):
        if self.lo < 0 or not self.lo < self.hi:
            raise ValueError(f"invalid window ({self.lo}, {self.hi}]")

    def mask(self, times: np.ndarray) -> np.ndarray:
        return (times > self.lo) & (times <= self.hi)

    def to_list(self) -> list:
        return [self.lo, None if math.isinf(self.hi) else self.hi]

    @classmethod
    def from_list(cls, pair) -> "TimeWindow":
        lo, hi = pair
        return cls(float(lo), math.inf if hi is None else float(hi))


FULL = TimeWindow()


@dataclass(frozen=True)
class CoxFit:
    beta_hat: float
    std_err: float
    loglik: float
    n_events_in_window: int
    iterations: int
    converged: bool
    diverged: bool = False
    degenerate: bool = False
    window: TimeWindow = FULL

    @property
    def ok(self) -> bool:
        return self.converged and not self.diverged and not self.degenerate

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = self.window.to_list()
        if not math.isfinite(d["std_err"]):
            d["std_err"] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CoxFit":
        d = dict(d)
        d["window"] = TimeWindow.from_list(d["window"])
        if d["std_err"] is None:
            d["std_err"] = math.inf
        return cls(**d)


def _window(window: TimeWindow | None) -> TimeWindow:
    return FULL if window is None else window


def _terms(sample, betas, masks):
    """loglik, score and information for each (beta, window-mask) row."""
    n = sample.n
    zev = sample.event_covariates
    log_sum, mean, var = event_moments(sample, betas)
    ll = (masks * (betas[:, None] * zev[None, :] - log_sum)).sum(axis=1) / n
    u = (masks * (zev[None, :] - mean)).sum(axis=1) / n
    info = (masks * var).sum(axis=1) / n
    return ll, u, info


def log_partial_likelihood(sample: SurvivalSample, beta: float, window: TimeWindow | None = None) -> float:
    """``(1/n) sum_{events in window} [beta z_i - log sum_{j at risk} exp(beta z_j)]``."""
    m = _window(window).mask(sample.event_times)[None, :]
    return float(_terms(sample, np.array([float(beta)]), m)[0][0])


def score(sample: SurvivalSample, beta: float, window: TimeWindow | None = None) -> float:
    m = _window(window).mask(sample.event_times)[None, :]
    return float(_terms(sample, np.array([float(beta)]), m)[1][0])


def information(sample: SurvivalSample, beta: float, window: TimeWindow | None = None) -> float:
    m = _window(window).mask(sample.event_times)[None, :]
    return float(_terms(sample, np.array([float(beta)]), m)[2][0])


def _newton_batch(sample: SurvivalSample, masks: np.ndarray):
    """Newton-Raphson from 0 with step halving, vectorised over windows."""
    m = masks.shape[0]
    beta = np.zeros(m)
    ll, u, info = _terms(sample, beta, masks)
    degenerate = ~(info > 0)
    iters = np.zeros(m, dtype=int)
    converged = np.abs(u) <= SCORE_TOL
    diverged = np.zeros(m, dtype=bool)
    active = ~(converged | degenerate)
    for _ in range(MAX_ITER):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        step = u[idx] / info[idx]
        cur_ll = ll[idx]
        new_b = beta[idx] + step
        n_ll, n_u, n_info = _terms(sample, new_b, masks[idx])
        for _ in range(MAX_HALVINGS):
            worse = n_ll < cur_ll
            if not worse.any():
                break
            step = np.where(worse, 0.5 * step, step)
            w = np.flatnonzero(worse)
            new_b[w] = beta[idx[w]] + step[w]
            h_ll, h_u, h_info = _terms(sample, new_b[w], masks[idx[w]])
            n_ll[w], n_u[w], n_info[w] = h_ll, h_u, h_info
        # no ascent at working precision: keep the previous iterate
        flat = n_ll < cur_ll
        new_b = np.where(flat, beta[idx], new_b)
        n_ll = np.where(flat, cur_ll, n_ll)
        n_u = np.where(flat, u[idx], n_u)
        n_info = np.where(flat, info[idx], n_info)
        beta[idx], ll[idx], u[idx], info[idx] = new_b, n_ll, n_u, n_info
        iters[idx] += 1
        conv = np.abs(n_u) <= SCORE_TOL
        div = np.abs(new_b) > BETA_LIMIT
        # information can vanish along a monotone-likelihood ray
        collapsed = ~(n_info > 0) & ~conv
        converged[idx] = conv & ~div
        diverged[idx] = div | collapsed
        active[idx] = ~(conv | div | collapsed | flat)
    return beta, ll, u, info, iters, converged, diverged, degenerate


def _risk_set_extremes(sample: SurvivalSample) -> tuple[np.ndarray, np.ndarray]:
    """Whether each event's covariate is the max / min of its risk set."""
    z = sample.sorted_covariate
    smax = np.maximum.accumulate(z[::-1])[::-1]
    smin = np.minimum.accumulate(z[::-1])[::-1]
    start = sample.risk_start
    zev = sample.event_covariates
    return zev >= smax[start], zev <= smin[start]


def fit_cox_many(sample: SurvivalSample, windows: Sequence[TimeWindow]) -> list[CoxFit]:
    """Maximise the windowed partial likelihood for each window.

    Fits that cannot be carried out are returned with flags set rather
    than raised: ``degenerate`` when the information at 0 is zero,
    ``diverged`` when the likelihood is monotone (every event in the
    window has the largest, or every one the smallest, covariate of its
    risk set, so the maximum lies at infinity), when ``|beta|`` leaves the
    +/-50 range, or when the information collapses before the score does.
    """
    windows = list(windows)
    times = sample.event_times
    masks = np.array([w.mask(times) for w in windows], dtype=float).reshape(len(windows), -1)
    at_max, at_min = _risk_set_extremes(sample)
    inside = masks > 0
    monotone = np.all(~inside | at_max, axis=1) | np.all(~inside | at_min, axis=1)
    per = max(1, _CHUNK // max(sample.n, 1))
    out: list[CoxFit] = []
    for a in range(0, len(windows), per):
        res = _newton_batch(sample, masks[a:a + per])
        beta, ll, u, info, iters, conv, div, deg = res
        for i in range(len(beta)):
            w = windows[a + i]
            ev = int(masks[a + i].sum())
            se = 1.0 / math.sqrt(sample.n * info[i]) if info[i] > 0 else math.inf
            mono = bool(monotone[a + i]) and not deg[i]
            out.append(CoxFit(
                beta_hat=float(beta[i]),
                std_err=se,
                loglik=float(ll[i]),
                n_events_in_window=ev,
                iterations=int(iters[i]),
                converged=bool(conv[i]) and not mono,
                diverged=bool(div[i]) or mono,
                degenerate=bool(deg[i]),
                window=w,
            ))
    return out


def fit_cox(sample: SurvivalSample, window: TimeWindow | None = None) -> CoxFit:
    """Maximum partial likelihood estimate over one window.

    Raises
    ------
    DegenerateVarianceError
        If the window has no events or every contributing risk set has
        zero covariate variance, so the information at 0 vanishes.
    """
    window = _window(window)
    fit = fit_cox_many(sample, [window])[0]
    if fit.degenerate:
        if fit.n_events_in_window == 0:
            raise DegenerateVarianceError(f"no events in window {window.to_list()}")
        raise DegenerateVarianceError(
            "covariate has zero risk-set variance at every event in the window"
        )
    return fit
