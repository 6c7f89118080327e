"""Command-line surface: warping, gradient verification, interpolation
demos, toy training, and image metrics.

Exit codes: 0 on success, 1 on verification/tolerance or I/O failure,
2 on usage errors. All commands are deterministic under a fixed --seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .conv import Freedom, gdconv_forward, load_params
from .core import read_png, stack_new, write_png
from .gradcheck import run_gradcheck
from .interp import VARIANTS, InterpKind, interp_eval, parse_kind, support_set
from .metrics import interpolation_error, psnr, ssim
from .toytrain import (
    AdamCfg,
    SynthSpec,
    evaluate,
    save_checkpoint,
    synth_stream,
    train,
)


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _nonnegative_int(value: str) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {n}")
    return n


def cmd_warp(args: argparse.Namespace) -> int:
    frames = [read_png(p) for p in args.frames]
    params, kind = load_params(args.params)
    if args.interp is not None:
        kind = parse_kind(args.interp)
    stack = stack_new(frames)
    gt = read_png(args.gt) if args.gt else None
    out = gdconv_forward(stack, params, kind)
    write_png(out, args.out)
    if gt is not None:
        print(f"PSNR: {psnr(out, gt):.2f} dB")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    report = run_gradcheck(args.trials, args.seed)
    for line in report.lines():
        print(line)
    print(f"trials: {report.trials_run}")
    if report.ok:
        print("gradcheck: OK")
        return 0
    print("gradcheck: FAILED (replay any trial with --trials 1 --seed <seed>)")
    return 1


def cmd_interp_demo(args: argparse.Namespace) -> int:
    t = len(args.values) - 1
    kind = parse_kind(args.interp)
    sup = support_set(args.values)
    zs = np.linspace(0.0, t, args.samples)
    rows = [(float(z), interp_eval(kind, 0.0, 0.0, float(z), sup)) for z in zs]
    if args.out == "-":
        writer = csv.writer(sys.stdout)
        writer.writerow(["z", "value"])
        writer.writerows((f"{z:.12g}", f"{v:.12g}") for z, v in rows)
    else:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["z", "value"])
            writer.writerows((f"{z:.12g}", f"{v:.12g}") for z, v in rows)
    return 0


def cmd_train_toy(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = SynthSpec(
        height=args.size,
        width=args.size,
        motion=args.motion,
        velocity=tuple(args.velocity),
        acceleration=tuple(args.acceleration),
        pattern=args.pattern,
        frame_times=tuple(args.frame_times),
        target_time=args.target_time,
        seed=args.seed,
    )
    if args.sequences > 1 or args.velocity_jitter > 0:
        specs = list(
            synth_stream(
                base, args.sequences, master_seed=args.seed,
                velocity_jitter=args.velocity_jitter,
            )
        )
    else:
        specs = [base]
    kind = parse_kind(args.interp)
    result = train(
        specs,
        reference_indices=args.reference,
        generation_indices=args.generation,
        kind=kind,
        steps=args.steps,
        adam_cfg=AdamCfg(lr=args.lr),
        n_points=args.n_points,
        freedom=Freedom(args.freedom),
        seed=args.seed,
    )
    with open(out_dir / "loss.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        writer.writerows((i, f"{v:.9g}") for i, v in enumerate(result.loss_curve))
    save_checkpoint(result.predictor, out_dir / "checkpoint.json")
    report = evaluate(result.predictor, specs[0], args.reference, args.generation, kind)
    payload = {
        "steps": args.steps,
        "psnr_model": report.psnr_model,
        "psnr_baseline": report.psnr_baseline,
        "psnr_gain_db": report.psnr_model - report.psnr_baseline,
        "final_loss": result.loss_curve[-1] if result.loss_curve else None,
    }
    (out_dir / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"model PSNR:    {report.psnr_model:.2f} dB")
    print(f"baseline PSNR: {report.psnr_baseline:.2f} dB")
    print(f"gain:          {report.psnr_model - report.psnr_baseline:+.2f} dB")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    a = read_png(args.a)
    b = read_png(args.b)
    print(f"PSNR: {psnr(a, b, peak=args.peak):.6g} dB")
    print(f"SSIM: {ssim(a, b):.6g}")
    print(f"IE:   {interpolation_error(a, b):.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdconv",
        description="Space-time deformable warping: synthesis, verification, demos, toy training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("warp", help="warp a frame stack with saved parameter fields")
    p.add_argument("--frames", nargs="+", required=True, help="source frames (PNG), in time order")
    p.add_argument("--params", required=True, help="parameter manifest (JSON)")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--gt", help="optional ground-truth PNG for a PSNR report")
    p.add_argument("--interp", choices=VARIANTS, help="override the manifest's interpolation kind")
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("gradcheck", help="finite-difference verification of all gradients")
    p.add_argument("--trials", type=_positive_int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("interp-demo", help="tabulate an interpolation curve as CSV")
    p.add_argument("--values", type=float, nargs="+", required=True, help="support values (>= 2)")
    p.add_argument("--interp", choices=VARIANTS, default="poly")
    p.add_argument("--samples", type=int, default=121)
    p.add_argument("--out", default="-", help="CSV path, or - for stdout")
    p.set_defaults(func=cmd_interp_demo)

    p = sub.add_parser("train-toy", help="train the toy predictor on synthetic motion")
    p.add_argument("--steps", type=_nonnegative_int, default=2000)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--pattern", choices=("rectangle", "checker", "gaussian-blob"), default="rectangle")
    p.add_argument("--motion", choices=("constant-velocity", "quadratic"), default="constant-velocity")
    p.add_argument("--velocity", type=float, nargs=2, default=[1.0, 0.0], metavar=("VX", "VY"))
    p.add_argument("--acceleration", type=float, nargs=2, default=[0.0, 0.0], metavar=("AX", "AY"))
    p.add_argument("--frame-times", type=float, nargs="+", default=[0.0, 1.0, 2.0, 3.0])
    p.add_argument("--target-time", type=float, default=1.5)
    p.add_argument("--reference", type=int, nargs="+", default=[1, 2], help="frame indices warped by the operator")
    p.add_argument("--generation", type=int, nargs="+", default=[0, 1, 2, 3], help="frame indices fed to the predictor")
    p.add_argument("--interp", choices=VARIANTS, default="poly")
    p.add_argument("--freedom", choices=[f.value for f in Freedom], default="e")
    p.add_argument("--n-points", type=_positive_int, default=4)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sequences", type=_positive_int, default=1, help="distinct training sequences to cycle")
    p.add_argument("--velocity-jitter", type=float, default=0.0, help="uniform per-sequence velocity perturbation")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("metrics", help="PSNR / SSIM / interpolation error between two images")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--peak", type=float, default=1.0)
    p.set_defaults(func=cmd_metrics)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "interp-demo":
        if len(args.values) < 2:
            parser.error("--values needs at least 2 support values")
        if args.samples < 2:
            parser.error("--samples must be >= 2")
    try:
        return args.func(args)
    except (ValueError, OSError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
