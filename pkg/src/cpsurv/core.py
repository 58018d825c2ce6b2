"""Survival data model, CSV ingestion and risk-set aggregates.

Records are kept in their original order and, alongside, in a tie-aware
sorted order: increasing time, and within a tied time events before
censorings, so that a subject censored at ``t`` is still at risk for an
event at ``t`` (``Y_j(t) = 1{X_j >= t}``).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

__all__ = [
    "DataError",
    "NumericalError",
    "DegenerateVarianceError",
    "SurvivalSample",
    "StepFunction",
    "RiskAggregates",
    "Diagnostics",
    "load_sample",
    "read_sample",
    "risk_aggregates",
    "diagnose",
    "event_moments",
]

HEADER = ("time", "status", "covariate")

# Relative cancellation bound for v = s2/s0 - e^2.
_VAR_RTOL = 64 * np.finfo(float).eps


class DataError(ValueError):
    """Invalid or unusable input data."""


class NumericalError(ArithmeticError):
    """A numerical procedure could not produce a meaningful answer."""


class DegenerateVarianceError(NumericalError):
    """The covariate has zero conditional variance where it is needed."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SurvivalSample:
    """Right-censored observations ``(time, status, covariate)``.

    Use :meth:`from_arrays` or :func:`load_sample` to build one; both
    validate the inputs and build the sorted view.
    """

    time: np.ndarray
    status: np.ndarray
    covariate: np.ndarray
    order: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, time, status, covariate) -> "SurvivalSample":
        x = np.asarray(time, dtype=float).ravel()
        d = np.asarray(status).ravel()
        z = np.asarray(covariate, dtype=float).ravel()
        if not (len(x) == len(d) == len(z)):
            raise DataError("time, status and covariate must have equal length")
        if len(x) == 0:
            raise DataError("empty sample")
        if not np.all(np.isfinite(x)):
            raise DataError("non-finite observed time")
        if np.any(x < 0):
            raise DataError("negative observed time")
        if not np.all(np.isfinite(z)):
            raise DataError("non-finite covariate")
        if not np.all((d == 0) | (d == 1)):
            raise DataError("status must be 0 or 1")
        d = d.astype(np.int8)
        if not d.any():
            raise DataError("sample has no events")
        # lexsort: last key is primary
        order = np.lexsort((1 - d, x))
        return cls(_frozen(x), _frozen(d), _frozen(z), _frozen(order))

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def n_events(self) -> int:
        return int(self.status.sum())

    # sorted views -------------------------------------------------------

    @property
    def sorted_time(self) -> np.ndarray:
        return self.time[self.order]

    @property
    def sorted_status(self) -> np.ndarray:
        return self.status[self.order]

    @property
    def sorted_covariate(self) -> np.ndarray:
        return self.covariate[self.order]

    @property
    def event_positions(self) -> np.ndarray:
        """Positions of the events in the sorted view, in failure order."""
        return np.flatnonzero(self.sorted_status == 1)

    @property
    def event_times(self) -> np.ndarray:
        return self.sorted_time[self.event_positions]

    @property
    def event_covariates(self) -> np.ndarray:
        return self.sorted_covariate[self.event_positions]

    @property
    def risk_start(self) -> np.ndarray:
        """For each event, first sorted position of its risk set."""
        xs = self.sorted_time
        return np.searchsorted(xs, xs[self.event_positions], side="left")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for x, d, z in zip(self.time, self.status, self.covariate):
            w.writerow((repr(float(x)), int(d), repr(float(z))))
        return buf.getvalue()


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function, left-closed at the cutpoints.

    ``value(t) = values[j]`` for ``cutpoints[j-1] < t <= cutpoints[j]``,
    with implicit cutpoints 0 and +inf at the ends.
    """

    cutpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        cps = tuple(float(c) for c in self.cutpoints)
        vals = tuple(float(v) for v in self.values)
        if len(vals) != len(cps) + 1:
            raise ValueError("need exactly one more value than cutpoints")
        if any(c <= 0 or not math.isfinite(c) for c in cps):
            raise ValueError("cutpoints must be positive and finite")
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("cutpoints must be strictly increasing")
        object.__setattr__(self, "cutpoints", cps)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float) -> "StepFunction":
        return cls((), (value,))

    @property
    def K(self) -> int:
        return len(self.values)

    def segment_index(self, t):
        # side="left" puts t == cutpoint in the segment ending at it
        return np.searchsorted(np.asarray(self.cutpoints), t, side="left")

    def __call__(self, t):
        idx = self.segment_index(t)
        out = np.asarray(self.values)[idx]
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        return {"cutpoints": list(self.cutpoints), "values": list(self.values)}

    @classmethod
    def from_dict(cls, d: dict) -> "StepFunction":
        return cls(tuple(d.get("cutpoints", ())), tuple(d["values"]))


@dataclass(frozen=True)
class RiskAggregates:
    s0: float
    s1: float
    s2: float
    e: float
    v: float


@dataclass(frozen=True)
class Diagnostics:
    """Input diagnostics for the bounded-covariate and variance conditions."""

    covariate_bound: float
    min_event_variance: float
    n_events: int
    censoring_fraction: float
    n: int
    degenerate_variance: bool

    @property
    def event_fraction(self) -> float:
        return self.n_events / self.n

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_events": self.n_events,
            "censoring_fraction": self.censoring_fraction,
            "event_fraction": self.event_fraction,
            "covariate_bound": self.covariate_bound,
            "min_event_variance": self.min_event_variance,
            "degenerate_variance": self.degenerate_variance,
        }


# ---------------------------------------------------------------------------
# ingestion


def read_sample(stream: TextIO | Iterable[str]) -> SurvivalSample:
    """Parse ``time,status,covariate`` CSV text into a sample.

    Blank lines and lines starting with ``#`` are skipped. Errors name the
    1-based line number of the offending row.
    """
    header = None
    times, stats, covs = [], [], []
    for lineno, line in enumerate(stream, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        row = next(csv.reader([s]))
        row = [c.strip() for c in row]
        if header is None:
            if tuple(row) != HEADER:
                raise DataError(
                    f"line {lineno}: expected header 'time,status,covariate', "
                    f"got {s!r}"
                )
            header = row
            continue
        if len(row) != 3:
            raise DataError(
                f"line {lineno}: expected 3 fields (single covariate), got {len(row)}"
            )
        try:
            x = float(row[0])
        except ValueError:
            raise DataError(f"line {lineno}: cannot parse time {row[0]!r}") from None
        if not math.isfinite(x) or x < 0:
            raise DataError(f"line {lineno}: time must be finite and >= 0, got {row[0]}")
        if row[1] not in ("0", "1"):
            raise DataError(f"line {lineno}: status must be 0 or 1, got {row[1]!r}")
        try:
            z = float(row[2])
        except ValueError:
            raise DataError(f"line {lineno}: cannot parse covariate {row[2]!r}") from None
        if not math.isfinite(z):
            raise DataError(f"line {lineno}: covariate must be finite")
        times.append(x)
        stats.append(int(row[1]))
        covs.append(z)
    if header is None:
        raise DataError("missing header 'time,status,covariate'")
    if not times:
        raise DataError("no data rows")
    if not any(stats):
        raise DataError("sample has no events")
    return SurvivalSample.from_arrays(times, stats, covs)


def load_sample(source: str) -> SurvivalSample:
    """Build a sample from CSV text (a string holding the file contents)."""
    return read_sample(io.StringIO(source))


# ---------------------------------------------------------------------------
# risk-set aggregates


def risk_aggregates(sample: SurvivalSample, beta: float, t: float) -> RiskAggregates:
    """``S^(0..2)(beta, t)`` over the risk set ``{j : x_j >= t}``, divided by n."""
    at_risk = sample.time >= t
    if not at_risk.any():
        raise DataError(f"empty risk set at t={t}")
    z = sample.covariate[at_risk]
    w = np.exp(beta * z - np.max(beta * z))
    scale = math.exp(float(np.max(beta * z))) / sample.n
    s0 = float(w.sum()) * scale
    s1 = float((w * z).sum()) * scale
    s2 = float((w * z * z).sum()) * scale
    e = s1 / s0
    # centred second moment: exactly zero for a constant risk set
    v = float((w * (z - e) ** 2).sum() / w.sum())
    if v <= _VAR_RTOL * (s2 / s0):
        v = 0.0
    return RiskAggregates(s0, s1, s2, e, v)


def event_moments(sample: SurvivalSample, betas) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Risk-set moments at every event time for a batch of coefficients.

    Parameters
    ----------
    sample : SurvivalSample
    betas : array_like, shape (m,)

    Returns
    -------
    log_sum : ndarray, shape (m, k)
        ``log(sum_{j at risk} exp(beta z_j))`` at each event (``log(n s0)``).
    mean, var : ndarray, shape (m, k)
        Conditional mean and variance of the covariate under the
        exponentially tilted risk-set weights.
    """
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    z = sample.sorted_covariate
    start = sample.risk_start
    # centring keeps the tilted second moment well conditioned
    zc = z - 0.5 * (z.min() + z.max())
    lin = betas[:, None] * zc[None, :]
    shift = lin.max(axis=1, keepdims=True)
    w = np.exp(lin - shift)
    # suffix sums: risk set of an event starts at its tie block
    c0 = np.cumsum(w[:, ::-1], axis=1)[:, ::-1][:, start]
    c1 = np.cumsum((w * zc)[:, ::-1], axis=1)[:, ::-1][:, start]
    c2 = np.cumsum((w * zc * zc)[:, ::-1], axis=1)[:, ::-1][:, start]
    mean_c = c1 / c0
    m2 = c2 / c0
    var = m2 - mean_c * mean_c
    var = np.where(var <= _VAR_RTOL * m2, 0.0, var)
    # log sum exp(beta z) = log sum exp(beta zc) + beta * centre
    centre = 0.5 * (z.min() + z.max())
    log_sum = np.log(c0) + shift + betas[:, None] * centre
    return log_sum, mean_c + centre, var


def diagnose(sample: SurvivalSample) -> Diagnostics:
    """Report covariate bound, minimum event variance, event counts."""
    _, _, var = event_moments(sample, [0.0])
    vmin = float(var.min())
    return Diagnostics(
        covariate_bound=float(np.max(np.abs(sample.covariate))),
        min_event_variance=vmin,
        n_events=sample.n_events,
        censoring_fraction=1.0 - sample.n_events / sample.n,
        n=sample.n,
        degenerate_variance=vmin == 0.0,
    )
