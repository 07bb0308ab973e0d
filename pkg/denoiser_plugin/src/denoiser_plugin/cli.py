"""Command line: ``train`` a denoiser, ``serve`` it (or an echo stub).

Examples:
    denoiser-plugin train --images hr1.png hr2.png --model model.pt \
        --width 16 --max-epochs 20
    denoiser-plugin serve --model model.pt --stdio
    denoiser-plugin serve --echo --tcp 127.0.0.1:7775
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .server import DenoiserServer
from .training import TrainingConfig, TrainingError, train


def _load_grayscale(path: str) -> np.ndarray:
    import imageio.v3 as iio

    arr = np.asarray(iio.imread(path))
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    elif arr.dtype == np.uint16:
        arr = arr.astype(np.float64) / 65535.0
    else:
        arr = np.clip(arr.astype(np.float64), 0.0, 1.0)
    if arr.ndim == 3:
        arr = arr[:, :, : min(arr.shape[2], 3)].mean(axis=2)
    return arr


def _cmd_train(args: argparse.Namespace) -> int:
    images = [_load_grayscale(p) for p in args.images]
    config = TrainingConfig(
        patch_size=args.patch_size,
        num_patches=args.num_patches,
        noise_sigma=args.noise_sigma,
        depth=args.depth,
        width=args.width,
        max_epochs=args.max_epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        patience=args.patience,
        seed=args.seed,
    )
    try:
        log = train(images, config, args.model)
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 1
    print(
        f"trained {log['epochs_run']} epochs "
        f"(best validation loss {log['best_val_loss']:.6f}); "
        f"model written to {args.model}"
    )
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    if args.echo:
        server = DenoiserServer(echo=True)
    elif args.model:
        server = DenoiserServer.from_file(args.model)
    else:
        print("serve needs --model or --echo", file=sys.stderr)
        return 2
    if args.stdio:
        server.serve_stdio()
        return 0
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        print(f"listening on {host}:{port}", file=sys.stderr)
        server.serve_tcp(host=host or "127.0.0.1", port=int(port))
        return 0
    print("serve needs --stdio or --tcp HOST:PORT", file=sys.stderr)
    return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="denoiser-plugin",
        description="Train and serve a residual CNN denoiser endpoint.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train on high-resolution images")
    tr.add_argument("--images", nargs="+", required=True)
    tr.add_argument("--model", required=True, help="output model file")
    tr.add_argument("--patch-size", type=int, default=180)
    tr.add_argument("--num-patches", type=int, default=400)
    tr.add_argument("--noise-sigma", type=float, default=0.1)
    tr.add_argument("--depth", type=int, default=17)
    tr.add_argument("--width", type=int, default=64)
    tr.add_argument("--max-epochs", type=int, default=50)
    tr.add_argument("--batch-size", type=int, default=16)
    tr.add_argument("--learning-rate", type=float, default=1e-3)
    tr.add_argument("--patience", type=int, default=2)
    tr.add_argument("--seed", type=int, default=0)
    tr.set_defaults(func=_cmd_train)

    sv = sub.add_parser("serve", help="answer frame-protocol requests")
    sv.add_argument("--model", default=None)
    sv.add_argument("--echo", action="store_true",
                    help="bypass the model, reply with the request")
    sv.add_argument("--stdio", action="store_true")
    sv.add_argument("--tcp", default=None, metavar="HOST:PORT")
    sv.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
