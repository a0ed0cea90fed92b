"""Command-line front end: ``multilens bound|solve|caustics|sweep|validate``.

Exit codes
    0 success, 2 bad input, 3 non-generic source, 4 the two image finders
    disagree, 5 an image count exceeds the bound, 6 no critical curve found.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .bounds import bound_report, check_g, image_bound, linear_conjecture
from .caustics import genericity_check, trace_critical_and_caustics
from .config import (
    ConfigError,
    dumps,
    ensemble_to_config,
    load_config,
    make_record,
    parse_config,
)
from .ensemble import Ensemble, make_ensemble
from .errors import (
    BoundViolationError,
    EmptyResultError,
    LensingError,
    MethodDisagreementError,
    NonGenericError,
)
from .solver import DEFAULT_TOL, GridSpec, count_images

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_NON_GENERIC = 3
EXIT_DISAGREE = 4
EXIT_BOUND = 5
EXIT_EMPTY = 6

# sweep distributions (fixed, see README)
MASS_RANGE = (0.1, 2.0)
BETA_RANGE = (0.2, 1.5)
SOURCE_RADIUS = 1.5
MAX_RETRIES = 20


class UsageError(Exception):
    pass


# -- argument helpers -----------------------------------------------------------

def _parse_point(text: str) -> complex:
    try:
        re_, im_ = (float(t) for t in text.split(","))
    except ValueError as exc:
        raise UsageError(f"expected RE,IM, got {text!r}") from exc
    z = complex(re_, im_)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise UsageError(f"non-finite point {text!r}")
    return z


def _parse_g(text: str) -> tuple[int, ...]:
    try:
        return check_g([int(t) for t in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"invalid g {text!r}: {exc}") from exc


def _parse_window(text: str) -> tuple[complex, float]:
    parts = text.split(",")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"invalid window {text!r}") from exc
    if len(vals) == 1:
        center, radius = 0j, vals[0]
    elif len(vals) == 3:
        center, radius = complex(vals[0], vals[1]), vals[2]
    else:
        raise UsageError("window is R or CX,CY,R")
    if not (radius > 0 and math.isfinite(radius)):
        raise UsageError("window radius must be positive")
    return center, radius


def _parse_krange(text: str) -> tuple[int, int]:
    try:
        lo, _, hi = text.partition("-")
        a, b = int(lo), int(hi or lo)
    except ValueError as exc:
        raise UsageError(f"invalid K {text!r}") from exc
    if not 1 <= a <= b:
        raise UsageError(f"invalid K range {text!r}")
    return a, b


def _tolerances(args):
    if args.tol is None:
        return DEFAULT_TOL
    if not (args.tol > 0):
        raise UsageError("--tol must be positive")
    return replace(DEFAULT_TOL, accept_rtol=args.tol)


def _grid(args) -> GridSpec:
    n = args.grid_n if args.grid_n is not None else GridSpec.n
    if n < 3:
        raise UsageError("--grid-n must be at least 3")
    if getattr(args, "window", None):
        center, radius = _parse_window(args.window)
        return GridSpec(n=n, radius=radius, center=center)
    return GridSpec(n=n)


def _threads() -> int:
    raw = os.environ.get("MULTILENS_THREADS")
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise UsageError(f"MULTILENS_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


# -- output ---------------------------------------------------------------------

def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_csv_cell(v) for v in r])
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _jsonl(records) -> str:
    return "".join(dumps(r) + "\n" for r in records)


def _load(args) -> tuple[Ensemble, complex | None]:
    if not args.config:
        raise UsageError("--config is required")
    try:
        return load_config(args.config)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


# -- subcommands ----------------------------------------------------------------

def cmd_bound(args) -> int:
    t0 = time.perf_counter()
    if args.g:
        g = _parse_g(args.g)
    elif args.config:
        g = _load(args)[0].g
    else:
        raise UsageError("bound needs --g or --config")
    rep = bound_report(g)
    out = rep.to_dict()
    out["linear_conjecture"] = linear_conjecture(g)
    if args.format == "csv":
        _emit(args, _csv_text(
            ["g", "E", "O", "theorem1", "bezout", "linear_conjecture"],
            [[list(g), rep.E, rep.O, rep.theorem1, rep.bezout, out["linear_conjecture"]]],
        ))
    else:
        rec = make_record("bound", {"g": list(g)}, out,
                          wall_time=time.perf_counter() - t0)
        _emit(args, _jsonl([rec]))
    return EXIT_OK


def _solve_outputs(ensemble, w, report):
    return {
        "g": list(ensemble.g),
        "source": w,
        "count": report.count,
        "bound": report.bound,
        "slack": report.slack,
        "methods": report.methods,
        "agreement": report.agreement,
        "margins": report.margins,
        "images": [im.to_dict() for im in report.images],
    }


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    ensemble, source = _load(args)
    if args.source:
        source = _parse_point(args.source)
    if source is None:
        raise UsageError("no source: give --source or a config 'source'")
    tol = _tolerances(args)
    grid = _grid(args)
    inputs = {"config": ensemble_to_config(ensemble, source), "tol": tol.accept_rtol,
              "grid_n": grid.n}
    status, code = "ok", EXIT_OK
    try:
        report = count_images(ensemble, source, grid, tol)
        outputs = _solve_outputs(ensemble, source, report)
    except NonGenericError as exc:
        status, code = "non_generic", EXIT_NON_GENERIC
        outputs = {"g": list(ensemble.g), "source": source, "error": str(exc),
                   "margins": exc.margins}
    except MethodDisagreementError as exc:
        status, code = "method_disagreement", EXIT_DISAGREE
        outputs = {"error": str(exc)}
        if exc.report is not None:
            outputs.update(_solve_outputs(ensemble, source, exc.report))
    except BoundViolationError as exc:
        status, code = "bound_violation", EXIT_BOUND
        outputs = {"error": str(exc)}
        if exc.report is not None:
            outputs.update(_solve_outputs(ensemble, source, exc.report))
    if args.format == "csv":
        _emit(args, _csv_text(
            ["g", "status", "count", "bound", "slack", "agreement"],
            [[list(ensemble.g), status, outputs.get("count"), outputs.get("bound"),
              outputs.get("slack"), outputs.get("agreement")]],
        ))
    else:
        rec = make_record("solve", inputs, outputs, status=status, exit_code=code,
                          wall_time=time.perf_counter() - t0)
        _emit(args, _jsonl([rec]))
    return code


def cmd_caustics(args) -> int:
    t0 = time.perf_counter()
    if args.format == "csv":
        raise UsageError("CSV output is only available for counts and bounds")
    ensemble, _ = _load(args)
    grid = _grid(args)
    inputs = {"config": ensemble_to_config(ensemble), "grid_n": grid.n,
              "window": args.window}
    try:
        samples = trace_critical_and_caustics(ensemble, grid)
    except EmptyResultError as exc:
        rec = make_record("caustics", inputs, {"error": str(exc), "samples": []},
                          status="empty", exit_code=EXIT_EMPTY,
                          wall_time=time.perf_counter() - t0)
        _emit(args, _jsonl([rec]))
        return EXIT_EMPTY
    outputs = {
        "contours": len({s.contour for s in samples}),
        "samples": [s.to_dict() for s in samples],
    }
    rec = make_record("caustics", inputs, outputs, wall_time=time.perf_counter() - t0)
    _emit(args, _jsonl([rec]))
    return EXIT_OK


def sample_ensemble(rng: np.random.Generator, K: int, gmax: int) -> Ensemble:
    """Random ensemble from the documented sweep distributions."""
    g = rng.integers(1, gmax + 1, size=K)
    lo, hi = np.log(MASS_RANGE[0]), np.log(MASS_RANGE[1])
    planes = []
    for gi in g:
        masses = np.exp(rng.uniform(lo, hi, size=gi))
        r = np.sqrt(rng.uniform(0.0, 1.0, size=gi))
        th = rng.uniform(0.0, 2 * np.pi, size=gi)
        planes.append((masses.tolist(), (r * np.exp(1j * th)).tolist()))
    betas = [rng.uniform(*BETA_RANGE, size=i).tolist() for i in range(1, K)]
    return make_ensemble(planes, betas)


def sample_source(rng: np.random.Generator) -> complex:
    r = SOURCE_RADIUS * np.sqrt(rng.uniform())
    return complex(r * np.exp(2j * np.pi * rng.uniform()))


def run_trial(index: int, seed: int, krange, gmax: int, grid_n: int,
              accept_rtol: float, timing: bool = False) -> dict:
    """One sweep trial; a pure function of its arguments."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    K = int(rng.integers(krange[0], krange[1] + 1))
    ens = sample_ensemble(rng, K, gmax)
    tol = replace(DEFAULT_TOL, accept_rtol=accept_rtol)
    grid = GridSpec(n=grid_n)
    try:
        caustics = trace_critical_and_caustics(ens, grid, tol)
    except EmptyResultError:
        caustics = []
    base = {"trial": index, "K": K, "g": list(ens.g), "bound": image_bound(ens.g),
            "linear_conjecture": linear_conjecture(ens.g),
            "config": ensemble_to_config(ens)}
    status, code, extra = "skipped", EXIT_OK, {}
    attempts = 0
    for attempts in range(1, MAX_RETRIES + 1):
        w = sample_source(rng)
        if not genericity_check(ens, w, caustics, tol=tol).passed:
            continue
        try:
            rep = count_images(ens, w, grid, tol, caustics=caustics)
        except NonGenericError:
            continue
        except MethodDisagreementError as exc:
            status, code = "method_disagreement", EXIT_DISAGREE
            extra = {"source": w, "error": str(exc)}
            if exc.report is not None:
                extra.update(count=exc.report.count, methods=exc.report.methods,
                             agreement=exc.report.agreement)
            break
        except BoundViolationError as exc:
            status, code = "bound_violation", EXIT_BOUND
            extra = {"source": w, "error": str(exc)}
            if exc.report is not None:
                extra.update(count=exc.report.count, methods=exc.report.methods)
            break
        except LensingError as exc:
            extra = {"last_error": f"{type(exc).__name__}: {exc}"}
            continue
        par = rep.parities
        status = "ok"
        extra = {
            "source": w,
            "count": rep.count,
            "slack": rep.slack,
            "methods": rep.methods,
            "agreement": rep.agreement,
            "positive_parity": sum(1 for p in par if p > 0),
            "negative_parity": sum(1 for p in par if p < 0),
            "images": [im.to_dict() for im in rep.images],
        }
        break
    outputs = dict(base, attempts=attempts, **extra)
    return make_record(
        "sweep", {"seed": seed, "trial": index, "K": list(krange), "gmax": gmax,
                  "grid_n": grid_n, "tol": accept_rtol},
        outputs, status=status, exit_code=code, seed=seed,
        wall_time=(time.perf_counter() - t0) if timing else None,
    )


def summarize(records: list[dict]) -> dict:
    by_g: dict[str, dict] = {}
    totals = {"trials": len(records), "ok": 0, "skipped": 0,
              "method_disagreement": 0, "bound_violation": 0}
    for rec in records:
        totals[rec["status"]] += 1
        out = rec["outputs"]
        if rec["status"] != "ok":
            continue
        key = ",".join(str(v) for v in out["g"])
        row = by_g.setdefault(key, {"trials": 0, "max_count": 0, "bound": out["bound"],
                                    "linear_conjecture": out["linear_conjecture"],
                                    "slacks": []})
        row["trials"] += 1
        row["max_count"] = max(row["max_count"], out["count"])
        row["slacks"].append(out["slack"])
    for row in by_g.values():
        s = row.pop("slacks")
        row["min_slack"] = min(s)
        row["mean_slack"] = float(np.mean(s))
        row["max_slack"] = max(s)
    return {"totals": totals, "by_g": dict(sorted(by_g.items()))}


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    if args.trials is None or args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.gmax < 1:
        raise UsageError("--gmax must be >= 1")
    krange = _parse_krange(args.K)
    seed = args.seed if args.seed is not None else 0
    if seed < 0:
        raise UsageError("--seed must be non-negative")
    tol = _tolerances(args)
    grid_n = _grid(args).n
    jobs = [(i, seed, krange, args.gmax, grid_n, tol.accept_rtol, args.timing)
            for i in range(args.trials)]
    workers = min(_threads(), len(jobs))
    if workers == 1:
        records = [run_trial(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map preserves trial order, so the byte stream is worker-independent
            records = list(pool.map(run_trial, *zip(*jobs)))
    summary = summarize(records)
    code = EXIT_OK
    if summary["totals"]["method_disagreement"]:
        code = EXIT_DISAGREE
    if summary["totals"]["bound_violation"]:
        code = EXIT_BOUND
    if args.format == "csv":
        rows = []
        for r in records:
            o = r["outputs"]
            rows.append([o["trial"], o["K"], o["g"], r["status"], o.get("count"),
                         o["bound"], o.get("slack"), o["linear_conjecture"]])
        _emit(args, _csv_text(
            ["trial", "K", "g", "status", "count", "bound", "slack",
             "linear_conjecture"], rows))
    else:
        summ = make_record(
            "sweep-summary",
            {"seed": seed, "trials": args.trials, "K": list(krange), "gmax": args.gmax},
            summary, status="ok" if code == EXIT_OK else "failed", exit_code=code,
            seed=seed, wall_time=(time.perf_counter() - t0) if args.timing else None,
        )
        _emit(args, _jsonl(records + [summ]))
    return code


def cmd_validate(args) -> int:
    t0 = time.perf_counter()
    ensemble, source = _load(args)
    doc = ensemble_to_config(ensemble, source)
    again, src2 = parse_config(doc)
    round_trip = again == ensemble and src2 == source
    outputs = {"valid": True, "round_trip": round_trip, "K": ensemble.K,
               "g": list(ensemble.g), "bound": image_bound(ensemble.g),
               "normalized": doc}
    rec = make_record("validate", doc, outputs, wall_time=time.perf_counter() - t0)
    _emit(args, _jsonl([rec]))
    return EXIT_OK if round_trip else EXIT_BAD_INPUT


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="ensemble JSON file")
    common.add_argument("--out", help="write records here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--tol", type=float, help="relative acceptance tolerance")
    common.add_argument("--grid-n", type=int, dest="grid_n", help="grid nodes per side")

    p = argparse.ArgumentParser(
        prog="multilens",
        description="Image counts, bounds and caustics of multiplane point-mass lenses.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    b = sub.add_parser("bound", parents=[common], help="image-count bounds for g")
    b.add_argument("--g", help="masses per plane, e.g. 2,1,3")
    b.set_defaults(func=cmd_bound)
    s = sub.add_parser("solve", parents=[common], help="find and count images")
    s.add_argument("--source", help="source position RE,IM")
    s.add_argument("--window", help="grid window R or CX,CY,R")
    s.set_defaults(func=cmd_solve)
    c = sub.add_parser("caustics", parents=[common], help="trace critical curves")
    c.add_argument("--window", help="grid window R or CX,CY,R")
    c.set_defaults(func=cmd_caustics)
    w = sub.add_parser("sweep", parents=[common], help="randomised count-vs-bound runs")
    w.add_argument("--K", default="1", help="planes per trial: N or A-B")
    w.add_argument("--gmax", type=int, default=3, help="max masses per plane")
    w.add_argument("--trials", type=int, default=20)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--timing", action="store_true",
                   help="record wall times (output is then not byte-reproducible)")
    w.set_defaults(func=cmd_sweep)
    v = sub.add_parser("validate", parents=[common], help="check a config file")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on malformed flags
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"multilens: error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
