"""Simulation of piecewise-constant hazard-ratio data and Monte Carlo studies.

Event times are drawn by inverting the cumulative hazard, which is
piecewise linear in ``t`` for a constant baseline. Censoring can be
uniform on ``[0, t_c]`` or exponential with a given rate; either
parameter may be calibrated to a target censored fraction.

Every replication draws from its own generator seeded with
``(seed, replication)``, so serial and parallel runs agree exactly.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace, asdict
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .core import DataError, NumericalError, StepFunction, SurvivalSample
from .multicp import DEFAULT_TRIM, detect_changepoints
from .scoreproc import detection_path
from .singlecp import DEFAULT_MIN_EVENTS, confidence_region, estimate_single_changepoint, profile_fit

__all__ = [
    "Covariate",
    "Censoring",
    "Scenario",
    "StudyResult",
    "cumulative_hazard",
    "draw_event_time",
    "draw_covariate",
    "calibrate_censoring",
    "calibrated",
    "generate_dataset",
    "run_coverage_study",
    "run_estimator_comparison",
    "run_multi_precision_study",
    "run_study",
    "scenario_catalog",
    "load_scenario",
]

CALIBRATION_SEED = 20_240_601
CAL_TOL = 0.005
_BRACKET = (1e-6, 1e6)


@dataclass(frozen=True)
class Covariate:
    kind: str = "uniform"
    p: float = 0.5  # bernoulli
    mean: float = 0.5  # normal
    var: float = 0.25  # normal
    rate: float = 0.5  # exponential

    def __post_init__(self):
        if self.kind not in ("bernoulli", "uniform", "normal", "exponential"):
            raise ValueError(f"unknown covariate distribution {self.kind!r}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        d.update({"bernoulli": {"p": self.p},
                  "normal": {"mean": self.mean, "var": self.var},
                  "exponential": {"rate": self.rate}}.get(self.kind, {}))
        return d


@dataclass(frozen=True)
class Censoring:
    """``param`` is ``t_c`` for uniform and the rate for exponential."""

    kind: str = "none"
    param: float | None = None
    target_fraction: float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "exponential"):
            raise ValueError(f"unknown censoring {self.kind!r}")
        if self.target_fraction is not None and not 0 <= self.target_fraction < 1:
            raise ValueError("target_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "param": self.param, "target_fraction": self.target_fraction}


@dataclass(frozen=True)
class Scenario:
    name: str
    beta0: StepFunction
    n: int
    covariate: Covariate = field(default_factory=Covariate)
    censoring: Censoring = field(default_factory=Censoring)
    baseline: float = 1.0
    seed: int = 0
    study: str | None = None
    alpha: float = 0.10

    def __post_init__(self):
        if not self.baseline > 0:
            raise ValueError("baseline hazard must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "beta0": self.beta0.to_dict(),
            "baseline": self.baseline,
            "covariate": self.covariate.to_dict(),
            "censoring": self.censoring.to_dict(),
            "seed": self.seed,
            "study": self.study,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            name=d.get("name", "custom"),
            beta0=StepFunction.from_dict(d["beta0"]),
            n=int(d["n"]),
            covariate=Covariate(**d.get("covariate", {})),
            censoring=Censoring(**d.get("censoring", {})),
            baseline=float(d.get("baseline", 1.0)),
            seed=int(d.get("seed", 0)),
            study=d.get("study"),
            alpha=float(d.get("alpha", 0.10)),
        )


def load_scenario(text: str) -> Scenario:
    return Scenario.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# generation


def _segment_rates(z, beta0: StepFunction, lambda0: float) -> np.ndarray:
    return lambda0 * np.exp(np.multiply.outer(np.asarray(z, dtype=float), np.asarray(beta0.values)))


def cumulative_hazard(t, z, beta0: StepFunction, lambda0: float = 1.0):
    """``H(t | z) = lambda0 * sum_j exp(beta_j z) |segment_j  (0, t]|``."""
    t = np.asarray(t, dtype=float)
    edges = np.concatenate(([0.0], beta0.cutpoints, [np.inf]))
    rates = _segment_rates(z, beta0, lambda0)
    lengths = np.clip(t[..., None] - edges[:-1], 0.0, np.diff(edges))
    out = (rates * lengths).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def draw_event_time(z, beta0: StepFunction, lambda0: float, u):
    """Solve ``H(t | z) = -log(u)`` segment by segment (vectorised)."""
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    target = -np.log(u)
    z, target = np.broadcast_arrays(z, target)
    cps = np.asarray(beta0.cutpoints)
    starts = np.concatenate(([0.0], cps))
    rates = _segment_rates(z, beta0, lambda0)  # (..., K)
    seg_len = np.diff(np.concatenate((starts, [np.inf])))
    h_at_start = np.concatenate(
        (np.zeros(z.shape + (1,)), np.cumsum(rates[..., :-1] * seg_len[:-1], axis=-1)), axis=-1
    )
    # last segment whose starting hazard does not exceed the target
    j = (h_at_start <= target[..., None]).sum(axis=-1) - 1
    h0 = np.take_along_axis(h_at_start, j[..., None], -1)[..., 0]
    r = np.take_along_axis(rates, j[..., None], -1)[..., 0]
    t = starts[j] + (target - h0) / r
    return float(t) if t.ndim == 0 else t


def draw_covariate(cov: Covariate, rng: np.random.Generator, size: int) -> np.ndarray:
    if cov.kind == "bernoulli":
        return (rng.random(size) < cov.p).astype(float)
    if cov.kind == "uniform":
        return rng.random(size)
    if cov.kind == "normal":
        return rng.normal(cov.mean, math.sqrt(cov.var), size)
    return rng.exponential(1.0 / cov.rate, size)


def _draw_times(scenario: Scenario, rng: np.random.Generator, size: int):
    z = draw_covariate(scenario.covariate, rng, size)
    u = 1.0 - rng.random(size)  # in (0, 1]
    u = np.where(u >= 1.0, np.nextafter(1.0, 0.0), u)
    return z, draw_event_time(z, scenario.beta0, scenario.baseline, u)


def _censored_fraction(kind: str, param: float, t: np.ndarray) -> float:
    # expected censored fraction given the event times
    if kind == "exponential":
        return float(np.mean(-np.expm1(-param * t)))
    return float(np.mean(np.minimum(t / param, 1.0)))


def calibrate_censoring(scenario: Scenario, target_fraction: float | None = None,
                        pilot_size: int = 100_000, seed: int = CALIBRATION_SEED) -> float | None:
    """Censoring parameter giving the target censored fraction.

    Bisection on the log parameter; the objective averages the
    conditional censoring probability over a pilot draw of event times,
    which is smooth and monotone in the parameter. Returns ``None`` when
    the target is 0 (no censoring).
    """
    kind = scenario.censoring.kind
    target = scenario.censoring.target_fraction if target_fraction is None else target_fraction
    if target is None:
        raise ValueError("no target censoring fraction given")
    if target == 0:
        return None
    if not 0 < target < 1:
        raise ValueError("target fraction must lie in [0, 1)")
    if kind == "none":
        raise ValueError("censoring kind 'none' cannot reach a positive target")
    rng = np.random.default_rng(seed)
    _, t = _draw_times(scenario, rng, pilot_size)
    lo, hi = (math.log(b) for b in _BRACKET)
    sign = 1.0 if kind == "exponential" else -1.0  # fraction increasing in log-param
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        f = _censored_fraction(kind, math.exp(mid), t)
        if sign * (f - target) < 0:
            lo = mid
        else:
            hi = mid
    param = math.exp(0.5 * (lo + hi))
    achieved = _censored_fraction(kind, param, t)
    if abs(achieved - target) > CAL_TOL:
        raise NumericalError(
            f"censoring target {target} unreachable (best {achieved:.4f})"
        )
    return param


def calibrated(scenario: Scenario) -> Scenario:
    """Scenario with a concrete censoring parameter."""
    c = scenario.censoring
    if c.kind == "none" or c.param is not None:
        return scenario
    if c.target_fraction is None:
        raise ValueError(f"censoring {c.kind!r} needs param or target_fraction")
    param = calibrate_censoring(scenario)
    if param is None:
        return replace(scenario, censoring=Censoring("none", None, 0.0))
    return replace(scenario, censoring=replace(c, param=param))


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(rep)]))


def generate_dataset(scenario: Scenario, rep: int = 0) -> SurvivalSample:
    """One sample of size ``n``; deterministic in ``(scenario.seed, rep)``."""
    sc = calibrated(scenario)
    rng = replication_rng(sc.seed, rep)
    z, t = _draw_times(sc, rng, sc.n)
    c = sc.censoring
    if c.kind == "none":
        return SurvivalSample.from_arrays(t, np.ones(sc.n, dtype=int), z)
    if c.kind == "uniform":
        cens = rng.uniform(0.0, c.param, sc.n)
    else:
        cens = rng.exponential(1.0 / c.param, sc.n)
    x = np.minimum(t, cens)
    d = (t <= cens).astype(int)
    return SurvivalSample.from_arrays(x, d, z)


# ---------------------------------------------------------------------------
# studies


@dataclass
class StudyResult:
    kind: str
    scenario: str
    replications: int
    failures: int
    statistics: dict[str, dict[str, float]]
    truth: list[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_table(self) -> str:
        return format_table(self)


def _mean_sd(values: np.ndarray) -> dict[str, float]:
    m = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return {"mean": m, "sd": sd, "mc_se": sd / math.sqrt(len(values))}


def _level(flags: np.ndarray) -> dict[str, float]:
    p = float(np.mean(flags))
    return {"value": 100 * p, "mc_se": 100 * math.sqrt(p * (1 - p) / len(flags))}


def _map(fn: Callable, reps: int, jobs: int) -> list:
    if jobs <= 1:
        return [fn(r) for r in range(reps)]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, range(reps), chunksize=max(1, reps // (4 * jobs))))


def _coverage_rep(rep: int, scenario: Scenario, alpha: float, min_events: int):
    sample = generate_dataset(scenario, rep)
    try:
        region = confidence_region(sample, alpha, min_events)
    except (DataError, NumericalError):
        return None
    gamma0 = scenario.beta0.cutpoints[0]
    return region.covers(gamma0), region.width


def run_coverage_study(scenario: Scenario, reps: int, alpha: float | None = None,
                       jobs: int = 1, min_events: int = DEFAULT_MIN_EVENTS) -> StudyResult:
    """Empirical level (in %) of the changepoint confidence region."""
    if scenario.beta0.K != 2:
        raise ValueError("coverage study needs a single-changepoint scenario")
    alpha = scenario.alpha if alpha is None else alpha
    sc = calibrated(scenario)
    out = _map(partial(_coverage_rep, scenario=sc, alpha=alpha, min_events=min_events), reps, jobs)
    good = [o for o in out if o is not None]
    missed = np.array([not c for c, _ in good], dtype=float)
    widths = np.array([w for _, w in good])
    stats = {"level": _level(missed), "width": _mean_sd(widths)} if good else {}
    return StudyResult("coverage", sc.name, reps, reps - len(good), stats,
                       truth=list(sc.beta0.cutpoints),
                       meta={"alpha": alpha, "n": sc.n, "censoring": sc.censoring.to_dict()})


def _ls_breakpoints(sample: SurvivalSample, K: int, trim: float) -> tuple[float, ...]:
    path = detection_path(sample)
    return detect_changepoints(path, K, trim).breakpoint_times


def _comparison_rep(rep: int, scenario: Scenario, min_events: int, trim: float):
    sample = generate_dataset(scenario, rep)
    try:
        pl = estimate_single_changepoint(sample, min_events).gamma_hat
        ls = _ls_breakpoints(sample, 2, trim)[0]
    except (DataError, NumericalError):
        return None
    return pl, ls


def run_estimator_comparison(scenario: Scenario, reps: int, jobs: int = 1,
                             min_events: int = DEFAULT_MIN_EVENTS,
                             trim: float = DEFAULT_TRIM) -> StudyResult:
    """Partial-likelihood vs least-squares changepoint estimates."""
    if scenario.beta0.K != 2:
        raise ValueError("estimator comparison needs a single-changepoint scenario")
    sc = calibrated(scenario)
    out = _map(partial(_comparison_rep, scenario=sc, min_events=min_events, trim=trim), reps, jobs)
    good = np.array([o for o in out if o is not None]).reshape(-1, 2)
    stats = {"PL": _mean_sd(good[:, 0]), "LS": _mean_sd(good[:, 1])} if len(good) else {}
    return StudyResult("comparison", sc.name, reps, reps - len(good), stats,
                       truth=list(sc.beta0.cutpoints),
                       meta={"n": sc.n, "censoring": sc.censoring.to_dict()})


def _precision_rep(rep: int, scenario: Scenario, trim: float):
    sample = generate_dataset(scenario, rep)
    try:
        return _ls_breakpoints(sample, scenario.beta0.K, trim)
    except (DataError, NumericalError):
        return None


def run_multi_precision_study(scenario: Scenario, reps: int, jobs: int = 1,
                              trim: float = DEFAULT_TRIM) -> StudyResult:
    """Mean and sd of each least-squares changepoint estimate."""
    K = scenario.beta0.K
    if K < 3:
        raise ValueError("precision study needs at least two changepoints")
    sc = calibrated(scenario)
    out = _map(partial(_precision_rep, scenario=sc, trim=trim), reps, jobs)
    good = np.array([o for o in out if o is not None]).reshape(-1, K - 1)
    stats = {f"gamma{j + 1}": _mean_sd(good[:, j]) for j in range(K - 1)} if len(good) else {}
    return StudyResult("precision", sc.name, reps, reps - len(good), stats,
                       truth=list(sc.beta0.cutpoints),
                       meta={"n": sc.n, "censoring": sc.censoring.to_dict()})


def run_study(scenario: Scenario, reps: int, jobs: int = 1, kind: str | None = None,
              alpha: float | None = None) -> StudyResult:
    kind = kind or scenario.study
    if kind == "coverage":
        return run_coverage_study(scenario, reps, alpha, jobs)
    if kind == "comparison":
        return run_estimator_comparison(scenario, reps, jobs)
    if kind == "precision":
        return run_multi_precision_study(scenario, reps, jobs)
    raise ValueError(f"unknown study kind {kind!r}")


def _cens_pct(res: StudyResult) -> str:
    c = res.meta.get("censoring", {})
    t = c.get("target_fraction")
    return "0" if c.get("kind") == "none" or not t else f"{100 * t:g}"


def format_table(res: StudyResult) -> str:
    """Aligned text table: one row per setting, cells ``mean (sd)``."""
    def cell(s):
        return f"{s['mean']:.3f} ({s['sd']:.3f})"

    if res.kind == "coverage":
        header = ["n", "% censoring", "level (%)", "MC s.e."]
        lv = res.statistics.get("level", {"value": float("nan"), "mc_se": float("nan")})
        row = [str(res.meta["n"]), _cens_pct(res), f"{lv['value']:.1f}", f"{lv['mc_se']:.1f}"]
    elif res.kind == "comparison":
        header = ["Model", "% censoring", "PL", "LS"]
        row = [res.scenario, _cens_pct(res)] + [cell(res.statistics[k]) for k in ("PL", "LS")]
    else:
        keys = sorted(res.statistics, key=lambda k: int(k[5:]))
        header = ["n", "% censoring"] + keys
        row = [str(res.meta["n"]), _cens_pct(res)] + [cell(res.statistics[k]) for k in keys]
    widths = [max(len(h), len(r)) for h, r in zip(header, row)]
    line = lambda cells: " | ".join(c.rjust(w) for c, w in zip(cells, widths))
    sep = "-+-".join("-" * w for w in widths)
    foot = f"replications: {res.replications}, failed: {res.failures}"
    return "\n".join([line(header), sep, line(row), foot]) + "\n"


# ---------------------------------------------------------------------------
# catalog


def _one_step(value: float, gamma: float) -> StepFunction:
    return StepFunction((gamma,), (value, 0.0))


def scenario_catalog() -> dict[str, Scenario]:
    """Built-in simulation settings, keyed by name."""
    cat: dict[str, Scenario] = {}

    def add(s: Scenario):
        cat[s.name] = s

    def exp_cens(pct):
        return Censoring("none") if pct == 0 else Censoring("exponential", None, pct / 100)

    covs = {
        "ber": Covariate("bernoulli", p=0.5),
        "unif": Covariate("uniform"),
        "norm": Covariate("normal", mean=0.5, var=0.25),
        "exp": Covariate("exponential", rate=0.5),
    }
    # empirical levels of the confidence region, finite and infinite support
    for table, keys in (("table1", ("ber", "unif")), ("table2", ("norm", "exp"))):
        for n in (500, 1000):
            for pct in (0, 30, 50):
                for g in (0.3, 0.5, 0.7):
                    for key in keys:
                        add(Scenario(f"{table}-{key}-n{n}-c{pct}-g{g}", _one_step(1.0, g), n,
                                     covs[key], exp_cens(pct), study="coverage", alpha=0.10))
    # effect-size scenarios for interval width, about 30% uniform censoring
    for i, (b, g) in enumerate(((0.5, 0.5), (1.0, 0.4), (1.5, 0.3), (2.0, 0.2)), start=1):
        add(Scenario(f"scenario{i}", _one_step(b, g), 1000, covs["unif"],
                     Censoring("uniform", None, 0.30), study="coverage", alpha=0.05))
    # PL vs LS
    for b, g in ((0.5, 0.5), (1.0, 0.4), (2.0, 0.3)):
        for pct in (0, 30, 50):
            add(Scenario(f"table3-b{b:g}-g{g}-c{pct}", _one_step(b, g), 1000, covs["unif"],
                         exp_cens(pct), study="comparison"))
    multi = {
        "scenario5": StepFunction((0.2, 0.6), (1.0, 0.0, -1.0)),
        "scenario6": StepFunction((0.5, 1.1, 2.4), (-1.0, 0.0, 0.5, 1.0)),
        "scenario7": StepFunction((0.1, 0.2, 0.3, 0.6), (2.0, 0.0, -1.0, 0.0, 1.5)),
    }
    for name, beta in multi.items():
        for n in (200, 500, 1000):
            for pct in (0, 30, 50):
                add(Scenario(f"{name}-n{n}-c{pct}", beta, n, covs["unif"], exp_cens(pct),
                             study="precision"))
    # score-process illustrations
    add(Scenario("figure1a", _one_step(3.0, 0.1), 500, covs["unif"], Censoring("uniform", None, 0.30)))
    add(Scenario("figure1b", StepFunction((0.1, 0.4), (2.0, 0.0, -1.0)), 500, covs["unif"],
                 Censoring("uniform", None, 0.30)))
    # binary covariate with a high-low-middle effect on a months-like time scale
    add(Scenario("application", StepFunction((26.0, 73.0), (1.8, 0.64, 1.03)), 1500,
                 covs["ber"], Censoring("uniform", 200.0), baseline=0.002, study="precision"))
    return cat
