"""Command-line front end.

Every command writes its artifact (JSON or CSV) to stdout, or to ``-o``,
and diagnostics to stderr. Exit codes: 0 success, 2 input error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DataError, NumericalError, SurvivalSample, diagnose, read_sample
from .coxfit import TimeWindow, fit_cox
from .multicp import DEFAULT_TRIM, detect_changepoints, fit_multi_model
from .scoreproc import DEFAULT_EPSILON, detection_path
from .simlab import Scenario, generate_dataset, load_scenario, run_study, scenario_catalog
from .singlecp import DEFAULT_MIN_EVENTS, confidence_region, region_report

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _plain(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed indent, trailing newline.

    Re-parsing the output and dumping again reproduces it byte for byte.
    """
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _read_input(path: str) -> SurvivalSample:
    if path == "-":
        return read_sample(sys.stdin)
    with open(path, newline="") as fh:
        return read_sample(fh)


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _warn(msg: str) -> None:
    print(msg, file=sys.stderr)


def _report_diagnostics(sample: SurvivalSample) -> None:
    d = diagnose(sample)
    _warn(f"n={d.n} events={d.n_events} censored={100 * d.censoring_fraction:.1f}%")


def _scenario(ident: str) -> Scenario:
    cat = scenario_catalog()
    if ident in cat:
        return cat[ident]
    path = Path(ident)
    if not path.exists():
        raise DataError(f"{ident!r} is neither a catalog scenario nor a file")
    return load_scenario(path.read_text())


# commands ------------------------------------------------------------------


def cmd_fit(args) -> int:
    sample = _read_input(args.input)
    _report_diagnostics(sample)
    window = TimeWindow(args.window[0], args.window[1]) if args.window else None
    fit = fit_cox(sample, window)
    if not fit.ok:
        _warn(f"Newton-Raphson did not converge (iterations={fit.iterations}, "
              f"beta={fit.beta_hat:.4g}, diverged={fit.diverged})")
        return EXIT_NUMERICAL
    _emit(dumps(fit.to_dict()), args.output)
    return EXIT_OK


def cmd_region(args) -> int:
    sample = _read_input(args.input)
    _report_diagnostics(sample)
    region = confidence_region(sample, args.alpha, args.min_events)
    _emit(dumps(region_report(region)), args.output)
    return EXIT_OK


def _segmentation(sample, args, K):
    path = detection_path(sample, args.k_mode, args.epsilon)
    return path, detect_changepoints(path, K, args.trim)


def cmd_detect(args) -> int:
    sample = _read_input(args.input)
    _report_diagnostics(sample)
    _, seg = _segmentation(sample, args, args.K)
    model = fit_multi_model(sample, seg.breakpoint_times)
    bad = [j + 1 for j, f in enumerate(model.fits) if not f.ok]
    if bad:
        _warn(f"segment fit did not converge in segment(s) {bad}")
    report = {
        "K": seg.K,
        "breakpoints": [{"index": i, "time": t}
                        for i, t in zip(seg.breakpoint_indices, seg.breakpoint_times)],
        "segments": [{"beta": f.beta_hat, "se": f.std_err, "window": f.window.to_list()}
                     for f in model.fits],
        "total_rss": seg.total_rss,
    }
    _emit(dumps(report), args.output)
    return EXIT_NUMERICAL if bad else EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args.scenario)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    if args.n is not None:
        sc = replace(sc, n=args.n)
    sample = generate_dataset(sc, args.rep)
    _report_diagnostics(sample)
    _emit(sample.to_csv(), args.output)
    return EXIT_OK


def cmd_study(args) -> int:
    sc = _scenario(args.scenario)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    res = run_study(sc, args.reps, jobs=args.jobs, kind=args.kind, alpha=args.alpha)
    if res.failures:
        _warn(f"{res.failures} of {res.replications} replications failed and were skipped")
    table = res.to_table()
    if args.table:
        Path(args.table).write_text(table + "\n")
    else:
        _warn(table)
    _emit(dumps(res.to_dict()), args.output)
    return EXIT_OK


def cmd_plot_data(args) -> int:
    sample = _read_input(args.input)
    _report_diagnostics(sample)
    if args.with_fit is None:
        path = detection_path(sample, args.k_mode, args.epsilon)
        _emit(path.to_csv(), args.output)
        return EXIT_OK
    path, seg = _segmentation(sample, args, args.with_fit)
    cols = [f"fit_{j + 1}" for j in range(seg.K)]
    lines = [",".join(["index", "t", "u", "event_time"] + cols)]
    for (i, t, u, et) in path.rows():
        cells = []
        for j, (a, b) in enumerate(seg.bounds):
            b = path.k if b is None else b
            cells.append(repr(float(seg.intercepts[j] + seg.slopes[j] * i)) if a <= i <= b else "")
        lines.append(",".join([str(i), t, u, et] + cells))
    _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


# parser --------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _segments(text: str) -> int:
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError("K must be at least 2")
    return v


def _unit(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpsurv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def with_io(sp, needs_input=True):
        if needs_input:
            sp.add_argument("input", help="sample CSV (time,status,covariate); '-' for stdin")
        sp.add_argument("-o", "--output", help="write the artifact here instead of stdout")

    def with_path_opts(sp):
        sp.add_argument("--k-mode", choices=["observed", "deterministic"], default="observed",
                        help="grid size: all failures, or floor(n(k/n - epsilon))")
        sp.add_argument("--epsilon", type=_unit, default=DEFAULT_EPSILON)
        sp.add_argument("--trim", type=float, default=DEFAULT_TRIM,
                        help="minimum segment length as a fraction of the grid")

    sp = sub.add_parser("fit", help="Cox fit on a time window")
    with_io(sp)
    sp.add_argument("--window", nargs=2, type=float, metavar=("LO", "HI"),
                    help="only events with LO < time <= HI contribute")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("region", help="single changepoint estimate and confidence region")
    with_io(sp)
    sp.add_argument("--alpha", type=_unit, default=0.05)
    sp.add_argument("--min-events", type=_positive_int, default=DEFAULT_MIN_EVENTS,
                    help="events required on each side of a candidate")
    sp.set_defaults(func=cmd_region)

    sp = sub.add_parser("detect", help="multiple changepoints by score-path segmentation")
    with_io(sp)
    sp.add_argument("-K", "--k-changepoints", dest="K", type=_segments, required=True,
                    help="number of segments (K - 1 changepoints)")
    with_path_opts(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("simulate", help="generate one dataset from a scenario")
    with_io(sp, needs_input=False)
    sp.add_argument("--scenario", required=True, help="catalog id or scenario JSON file")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--rep", type=int, default=0, help="replication index")
    sp.add_argument("--n", type=_positive_int, help="override the sample size")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("study", help="Monte Carlo study")
    with_io(sp, needs_input=False)
    sp.add_argument("--scenario", required=True, help="catalog id or scenario JSON file")
    sp.add_argument("--reps", type=_positive_int, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=_positive_int, default=1)
    sp.add_argument("--kind", choices=["coverage", "comparison", "precision"],
                    help="defaults to the scenario's study")
    sp.add_argument("--alpha", type=_unit, help="coverage studies only")
    sp.add_argument("--table", help="write the text table here instead of stderr")
    sp.set_defaults(func=cmd_study)

    sp = sub.add_parser("plot-data", help="score path as CSV series")
    with_io(sp)
    sp.add_argument("--with-fit", type=_segments, metavar="K",
                    help="add fitted line columns for a K-segment fit")
    with_path_opts(sp)
    sp.set_defaults(func=cmd_plot_data)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        _warn(f"error: {exc}")
        return EXIT_INPUT
    except NumericalError as exc:
        _warn(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except (ValueError, KeyError, TypeError) as exc:
        _warn(f"error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
