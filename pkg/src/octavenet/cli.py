"""Command-line interface: build, analyze, ablation, compare, verify, bench.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 internal
error.  Reports go to stdout or ``--out PATH``; ``--figures DIR`` renders
PNG charts next to the delimited output.  ``OCTAVENET_THREADS`` caps the
BLAS thread count for reproducible serial benchmarks.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import figures
from .analysis import bench_forward, compare, count_costs, emit_report
from .verify import SUITES, run_verification
from .zoo import MODEL_ALPHA, MODEL_NAMES, build_model, build_octave_yolo, build_yolov8

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_INTERNAL = 3


class UsageError(ValueError):
    pass


def _resolve_resolution(res: int, strict: bool) -> int:
    if res <= 0:
        raise UsageError(f"resolution must be positive, got {res}")
    if res % 32 == 0:
        return res
    if strict:
        raise UsageError(f"resolution {res} is not divisible by 32 (strict mode)")
    rounded = ((res + 31) // 32) * 32
    print(f"warning: resolution {res} rounded up to {rounded} "
          f"(multiple of 32, as letterboxing would)", file=sys.stderr)
    return rounded


def _octave_opts(args) -> dict:
    return {"use_fsb": not args.no_fsb, "use_dsdown": not args.no_dsdown,
            "use_fssa": not args.no_fssa, "alpha": args.alpha,
            "backbone_only": args.backbone_only}


def _build(name: str, args):
    if name.startswith("octave-yolo-"):
        return build_model(name, **_octave_opts(args))
    return build_model(name)


def _write(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _figure_path(args, stem: str) -> str:
    os.makedirs(args.figures, exist_ok=True)
    return os.path.join(args.figures, stem + ".png")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_build(args) -> int:
    res = _resolve_resolution(args.res, args.strict_res)
    graph = _build(args.model, args)
    _write(json.dumps(graph.to_json_dict(res), indent=2, sort_keys=True), args.out)
    return EXIT_OK


def cmd_analyze(args) -> int:
    res = _resolve_resolution(args.res, args.strict_res)
    reports = []
    for name in args.model:
        graph = _build(name, args)
        report = count_costs(graph, res)
        if args.baseline:
            base = count_costs(_build(args.baseline, args), res)
            report = compare(report, base)
        reports.append(report)
    _write(emit_report(reports, args.format), args.out)
    if args.figures:
        figures.cost_bars(reports, _figure_path(args, "analyze_costs"),
                          title=f"cost @ {res}")
        for r in reports:
            figures.stage_breakdown(r, _figure_path(args, f"stages_{r.model}"))
    return EXIT_OK


def cmd_ablation(args) -> int:
    res = _resolve_resolution(args.res, args.strict_res)
    scale = args.scale
    configs = [
        build_yolov8(scale),
        build_octave_yolo(scale, True, False, False, alpha=args.alpha),
        build_octave_yolo(scale, True, True, False, alpha=args.alpha),
        build_octave_yolo(scale, True, True, True, alpha=args.alpha),
    ]
    base = count_costs(configs[0], res)
    reports = [base] + [compare(count_costs(g, res), base) for g in configs[1:]]
    _write(emit_report(reports, args.format), args.out)
    if args.figures:
        figures.cost_bars(reports, _figure_path(args, f"ablation_{scale}"),
                          title=f"ablation ladder ({scale} @ {res})")
    return EXIT_OK


def cmd_compare(args) -> int:
    res = _resolve_resolution(args.res, args.strict_res)
    ours = count_costs(_build(args.model[0], args), res)
    base = count_costs(_build(args.baseline, args), res)
    report = compare(ours, base)
    _write(emit_report([base, report], args.format), args.out)
    if args.figures:
        figures.cost_bars([base, report], _figure_path(args, "compare"),
                          title=f"{args.model[0]} vs {args.baseline} @ {res}")
    return EXIT_OK


def cmd_verify(args) -> int:
    verdict = run_verification(seed=args.seed, grad_tol=args.tol,
                               suites=args.suite or None)
    _write(json.dumps(verdict, indent=2, sort_keys=True), args.out)
    return EXIT_OK if verdict["passed"] else EXIT_VERIFY


def cmd_bench(args) -> int:
    results = []
    for name in args.model:
        graph = _build(name, args)
        for res in args.res:
            res = _resolve_resolution(res, args.strict_res)
            results.append(bench_forward(graph, res, repeats=args.repeats,
                                         seed=args.seed))
    doc = {"schema": 1, "results": [r.to_dict() for r in results]}
    _write(json.dumps(doc, indent=2, sort_keys=True), args.out)
    if args.figures:
        figures.latency_lines(results, _figure_path(args, "latency"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p, *, model=None, default_model=None):
    if model == "multi":
        p.add_argument("--model", nargs="+", default=default_model,
                       required=default_model is None, metavar="NAME",
                       help=f"model name(s), one of {MODEL_NAMES}")
    elif model == "single":
        p.add_argument("--model", default=default_model,
                       required=default_model is None, metavar="NAME",
                       help=f"model name, one of {MODEL_NAMES}")
    p.add_argument("--alpha", type=float, default=MODEL_ALPHA,
                   help="low-frequency channel fraction for octave models")
    p.add_argument("--no-fsb", action="store_true", help="keep C2f blocks")
    p.add_argument("--no-dsdown", action="store_true",
                   help="keep stride-2 conv downsampling")
    p.add_argument("--no-fssa", action="store_true", help="omit the FSSA block")
    p.add_argument("--backbone-only", action="store_true",
                   help="apply octave blocks in the backbone only")
    p.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    p.add_argument("--figures", metavar="DIR", help="render PNG charts into DIR")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict-res", action="store_true",
                   help="error instead of rounding resolution up to a multiple of 32")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="octavenet",
                                 description="Cross-frequency YOLO cost analysis toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="emit a model graph as JSON")
    _add_common(p, model="single")
    p.add_argument("--res", type=int, default=640)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("analyze", help="per-layer parameter/FLOP report")
    _add_common(p, model="multi", default_model=["yolov8-n"])
    p.add_argument("--res", type=int, default=640)
    p.add_argument("--baseline", metavar="NAME", help="also report deltas against this model")
    p.add_argument("--format", choices=["json", "csv", "markdown"], default="markdown")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ablation", help="the four-configuration component ladder")
    _add_common(p)
    p.add_argument("--scale", choices=list("nsmlx"), default="n")
    p.add_argument("--res", type=int, default=640)
    p.add_argument("--format", choices=["json", "csv", "markdown"], default="markdown")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("compare", help="delta report of one model against a baseline")
    _add_common(p, model="multi")
    p.add_argument("--baseline", required=True, metavar="NAME")
    p.add_argument("--res", type=int, default=640)
    p.add_argument("--format", choices=["json", "csv", "markdown"], default="markdown")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="run the built-in verification suites")
    _add_common(p)
    p.add_argument("--tol", type=float, default=1e-4,
                   help="relative tolerance for the gradient checks")
    p.add_argument("--suite", nargs="*", choices=list(SUITES),
                   help="run only the named suites")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="median forward wall time (serial reference)")
    _add_common(p, model="multi", default_model=["yolov8-n", "octave-yolo-n"])
    p.add_argument("--res", type=int, nargs="+", default=[320, 640])
    p.add_argument("--repeats", type=int, default=20)
    p.set_defaults(func=cmd_bench)

    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    threads = os.environ.get("OCTAVENET_THREADS")
    limiter = None
    if threads:
        try:
            from threadpoolctl import threadpool_limits
            limiter = threadpool_limits(limits=int(threads))
        except (ImportError, ValueError):
            print(f"warning: OCTAVENET_THREADS={threads!r} ignored", file=sys.stderr)

    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    finally:
        if limiter is not None:
            limiter.unregister()


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
