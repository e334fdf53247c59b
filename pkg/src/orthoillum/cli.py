"""Command-line surface: phantom generation, correction, enface export,
and before/after evaluation.

Exit codes: 0 success, 1 invalid input or usage, 2 optimizer divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import iovol
from .correction import enface
from .errors import IoFailureError, ValidationError
from .metrics import evaluate_pair
from .optimizer import TerminationReason
from .phantom import PhantomSpec, generate_pair
from .pipeline import RunConfig, run_correction
from .volume import ScanDirection

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DIVERGED = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orthoillum",
        description="Illumination correction for orthogonally raster-scanned volumes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic orthogonal scan pair")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--size", nargs=3, type=int, default=[128, 128, 64],
                   metavar=("X", "Y", "D"))
    p.add_argument("--illum-amplitude", type=float, default=0.4)
    p.add_argument("--jumps", type=float, default=0.3,
                   help="per-B-scan probability of an illumination jump")
    p.add_argument("--bands", type=int, default=2)
    p.add_argument("--gaps", type=int, default=2)
    p.add_argument("--blink-rows", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--spline-representable", action="store_true",
                   help="draw illumination on the model knot grid")

    c = sub.add_parser("correct", help="fit and apply illumination correction")
    c.add_argument("--inputs", nargs="+", required=True, metavar="VOL")
    c.add_argument("--out", required=True)
    c.add_argument("--lambda", dest="lam", type=float, default=RunConfig.lam)
    c.add_argument("--density", type=float, default=RunConfig.density_per_mm,
                   help="spline knots per millimetre")
    c.add_argument("--max-iters", type=int, default=RunConfig.max_iterations)
    c.add_argument("--lr", type=float, default=None)
    c.add_argument("--momentum", type=float, default=RunConfig.momentum)
    c.add_argument("--threads", type=int, default=RunConfig.thread_count)
    c.add_argument("--depth-stride", type=int, default=RunConfig.depth_stride)

    e = sub.add_parser("enface", help="render a depth-averaged image")
    e.add_argument("--input", required=True)
    e.add_argument("--overlap", default=None,
                   help="registered volume restricting the coverage")
    e.add_argument("--out", required=True, help="FILE.pgm or FILE.csv")

    v = sub.add_parser("evaluate", help="before/after pair comparison")
    v.add_argument("--before", nargs=2, required=True, metavar="VOL")
    v.add_argument("--after", nargs=2, required=True, metavar="VOL")
    v.add_argument("--truth", default=None, help="phantom truth.json")
    v.add_argument("--out", required=True, help="report JSON path")
    return parser


def _cmd_phantom(args) -> int:
    spec = PhantomSpec(
        grid=tuple(args.size),
        illum_amplitude=args.illum_amplitude,
        jump_probability=args.jumps,
        band_count=args.bands,
        gap_count=args.gaps,
        blink_rows=args.blink_rows,
        noise_sigma=args.noise,
        seed=args.seed,
        spline_representable=args.spline_representable,
    )
    truth, vol_x, vol_y = generate_pair(spec)
    out = Path(args.out)
    iovol.write_volume(vol_x, out / "xfast")
    iovol.write_volume(vol_y, out / "yfast")
    iovol.write_truth(truth, out / "truth.json")
    print(f"wrote {out / 'xfast'}, {out / 'yfast'}, {out / 'truth.json'}")
    return EXIT_OK


def _cmd_correct(args) -> int:
    if len(args.inputs) < 2:
        print("correct: need at least two input volumes", file=sys.stderr)
        return EXIT_INVALID
    volumes = [iovol.read_volume(p) for p in args.inputs]
    config = RunConfig(
        lam=args.lam,
        density_per_mm=args.density,
        learning_rate=args.lr,
        momentum=args.momentum,
        max_iterations=args.max_iters,
        thread_count=args.threads,
        depth_stride=args.depth_stride,
    )
    result = run_correction(volumes, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, corrected in enumerate(result.corrected):
        iovol.write_volume(corrected, out / f"corrected_{i}")
    iovol.write_volume(result.merged, out / "merged")
    iovol.write_corrections(
        result.fields, [v.direction for v in volumes], out / "corrections.json"
    )
    iovol.write_trace(result.trace, result.config, out / "trace.log")
    iovol.write_summary(
        result.trace,
        result.config,
        {"n_volumes": len(volumes), "inputs": list(args.inputs)},
        out / "summary.json",
    )
    if result.trace.termination_reason is TerminationReason.DIVERGED:
        print("correct: optimizer diverged (non-finite objective)", file=sys.stderr)
        return EXIT_DIVERGED
    final = result.trace.records[-1]
    print(
        f"converged={result.trace.termination_reason.value} "
        f"iterations={final.iteration} total={final.total:.6g}"
    )
    return EXIT_OK


def _cmd_enface(args) -> int:
    volume = iovol.read_volume(args.input)
    overlap = iovol.read_volume(args.overlap) if args.overlap else None
    image = enface(volume, overlap)
    out = Path(args.out)
    if out.suffix.lower() == ".pgm":
        iovol.write_enface_pgm(image, out)
    elif out.suffix.lower() == ".csv":
        iovol.write_enface_csv(image, out)
    else:
        print(f"enface: output must end in .pgm or .csv, got {out.name}", file=sys.stderr)
        return EXIT_INVALID
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    before = [iovol.read_volume(p) for p in args.before]
    after = [iovol.read_volume(p) for p in args.after]
    truth_curves = truth_fg = None
    if args.truth:
        _, curves, fg = iovol.read_truth(args.truth)
        try:
            truth_curves = [curves[v.direction] for v in before]
            truth_fg = [fg[v.direction] for v in before]
        except KeyError as exc:
            print(f"evaluate: truth lacks direction {exc}", file=sys.stderr)
            return EXIT_INVALID
    report = evaluate_pair(before, after, truth_curves, truth_fg)
    iovol.write_report(report, args.out)
    print(
        f"mad_before={report.mad_before:.6g} mad_after={report.mad_after:.6g} "
        f"reduction={report.reduction_percent:.2f}% decreased={report.decreased}"
    )
    return EXIT_OK


_COMMANDS = {
    "phantom": _cmd_phantom,
    "correct": _cmd_correct,
    "enface": _cmd_enface,
    "evaluate": _cmd_evaluate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, IoFailureError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
