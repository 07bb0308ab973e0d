"""Command-line entry points.

Subcommands: ``reconstruct`` (run a config), ``simulate`` (HR to LR),
``metrics`` (PSNR/FRC/speed-up between files), ``verify-theory`` (dense
certification suite) and ``phantom`` (synthetic test images).  Flags
override config keys; ``reconstruct`` exits nonzero when the solve did not
converge unless ``--allow-unconverged`` is given.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .metrics import SpeedupInput, frc, psnr, speedup
from .theory import run_verification_suite


def _cmd_reconstruct(args: argparse.Namespace) -> int:
    config = pipeline.ExperimentConfig.from_file(args.config)
    overrides = {
        "mu": args.mu,
        "rho": args.rho,
        "tol": args.tol,
        "max_iters": args.max_iters,
        "factor": args.factor,
        "forward_kind": args.forward,
        "output_dir": args.output_dir,
        "noise_seed": args.seed,
    }
    data = config.to_dict()
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    config = pipeline.ExperimentConfig.from_dict(data)
    record = pipeline.run_reconstruction(config)
    for name, value in sorted(record.metrics.items()):
        print(f"{name} = {value:.6g}")
    print(f"artifacts in {config.output_dir}")
    if not record.converged and not args.allow_unconverged:
        print("solve did not converge within the iteration budget", file=sys.stderr)
        return 1
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    hr = pipeline.load_image(args.input)
    lr = pipeline.simulate_lr(hr, args.factor, args.sigma_w, args.seed)
    pipeline.save_image(args.output, lr)
    print(f"wrote {args.output} ({lr.shape[0]}x{lr.shape[1]})")
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    if args.reference and args.test:
        ref = pipeline.load_image(args.reference)
        test = pipeline.load_image(args.test)
        print(f"psnr_db = {psnr(ref, test, peak=args.peak):.6g}")
        if ref.shape[0] == ref.shape[1]:
            curve = frc(ref, test, threshold_kind=args.frc_threshold)
            crossing = curve.crossing_frequency
            print(f"frc_crossing = {crossing if crossing is not None else 'none'}")
            if args.frc_csv:
                curve.write_csv(args.frc_csv)
                print(f"wrote {args.frc_csv}")
    if args.speedup:
        dims = [int(v) for v in args.speedup.split(",")]
        if len(dims) != 6:
            print("--speedup expects lr_h,lr_w,train_h,train_w,recon_h,recon_w",
                  file=sys.stderr)
            return 2
        value = speedup(
            SpeedupInput(
                lr_pixels=(dims[0], dims[1]),
                hr_train_pixels=(dims[2], dims[3]),
                hr_recon_pixels=(dims[4], dims[5]),
            )
        )
        print(f"speedup = {value:.2f}")
    return 0


def _cmd_verify_theory(args: argparse.Namespace) -> int:
    records = run_verification_suite(seed=args.seed)
    all_passed = True
    for rec in records:
        status = "pass" if rec.passed else "FAIL"
        print(f"[{status}] {rec.name}: {rec.value:.3e} (threshold {rec.threshold:g})")
        all_passed &= rec.passed
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("name,value\n")
            for rec in records:
                fh.write(f"{rec.name},{rec.value:.12g}\n")
        print(f"wrote {args.output}")
    return 0 if all_passed else 1


def _cmd_phantom(args: argparse.Namespace) -> int:
    img = pipeline.make_phantom(args.kind, args.size, args.seed)
    pipeline.save_image(args.output, img)
    print(f"wrote {args.output} ({args.size}x{args.size}, kind={args.kind})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="macesr",
        description="Super-resolution by multi-agent consensus equilibrium.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    rec = sub.add_parser("reconstruct", help="run a reconstruction config")
    rec.add_argument("--config", required=True, type=Path)
    rec.add_argument("--output-dir", default=None)
    rec.add_argument("--mu", type=float, default=None)
    rec.add_argument("--rho", type=float, default=None)
    rec.add_argument("--tol", type=float, default=None)
    rec.add_argument("--max-iters", type=int, default=None)
    rec.add_argument("--factor", type=int, default=None)
    rec.add_argument("--forward", choices=["standard", "rap"], default=None)
    rec.add_argument("--seed", type=int, default=None)
    rec.add_argument("--allow-unconverged", action="store_true")
    rec.set_defaults(func=_cmd_reconstruct)

    sim = sub.add_parser("simulate", help="degrade an HR image to LR")
    sim.add_argument("--input", required=True)
    sim.add_argument("--output", required=True)
    sim.add_argument("--factor", type=int, required=True)
    sim.add_argument("--sigma-w", type=float, default=0.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.set_defaults(func=_cmd_simulate)

    met = sub.add_parser("metrics", help="PSNR / FRC / speed-up")
    met.add_argument("--reference", default=None)
    met.add_argument("--test", default=None)
    met.add_argument("--peak", type=float, default=1.0)
    met.add_argument("--frc-threshold", default="half-bit")
    met.add_argument("--frc-csv", default=None)
    met.add_argument(
        "--speedup",
        default=None,
        help="lr_h,lr_w,train_h,train_w,recon_h,recon_w",
    )
    met.set_defaults(func=_cmd_metrics)

    ver = sub.add_parser("verify-theory", help="run the dense certification suite")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--output", default=None, help="CSV report path")
    ver.set_defaults(func=_cmd_verify_theory)

    pha = sub.add_parser("phantom", help="generate a synthetic test image")
    pha.add_argument("--kind", choices=list(pipeline.PHANTOM_KINDS), required=True)
    pha.add_argument("--size", type=int, default=128)
    pha.add_argument("--seed", type=int, default=0)
    pha.add_argument("--output", required=True)
    pha.set_defaults(func=_cmd_phantom)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
