"""Command line entry points: train, gradcheck, weights-info.

Exit codes: 0 success, 1 failed check, 2 configuration or usage error,
3 data or file format error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

from .data import DEFAULT_SPLIT
from .errors import ConfigError, DataError, FormatError, HsitrainError, NumericError
from .formats import load_tensors
from .gradcheck import gradient_check, toy_setup
from .train import TrainConfig, train


def _csv_values(text: str, kind, what: str) -> tuple:
    try:
        return tuple(kind(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"{what} must be comma-separated {kind.__name__}s, "
                          f"got '{text}'") from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsitrain",
                                     description="Fit segmentation models on "
                                                 "HSC cubes and export HSWT weights.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("train", help="fit a model on a directory of cube/label pairs")
    p.add_argument("--data", required=True, help="directory of <stem>.hsc + <stem>.pgm")
    p.add_argument("--out", required=True, help="HSWT output path")
    p.add_argument("--log", help="JSON training-log path")
    p.add_argument("--model", default="unet", choices=("unet", "mlp"))
    p.add_argument("--scheme", default="three_class")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default=None,
                   help="train,val,test ratios summing to 1")
    p.add_argument("--patch", type=int, default=128)
    p.add_argument("--overlap", type=int, default=32)
    p.add_argument("--base", type=int, default=8)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--hidden", default="25,100,100",
                   help="MLP hidden widths, comma separated")

    p = sub.add_parser("gradcheck", help="verify gradients on a tiny model")
    p.add_argument("--model", default="unet", choices=("unet", "mlp", "linear"))
    # default fixture verified to sit clear of ReLU/pool kinks at this step
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--threshold", type=float, default=1e-3)

    p = sub.add_parser("weights-info", help="list tensors and metadata of an HSWT file")
    p.add_argument("--weights", required=True)
    return parser


def cmd_train(args) -> int:
    split = DEFAULT_SPLIT if args.split is None else _csv_values(args.split, float, "--split")
    cfg = TrainConfig(model=args.model, scheme=args.scheme, epochs=args.epochs,
                      batch=args.batch, lr=args.lr, seed=args.seed, split=split,
                      patch=args.patch, overlap=args.overlap, base=args.base,
                      depth=args.depth,
                      hidden=_csv_values(args.hidden, int, "--hidden"))
    log = train(args.data, cfg, args.out, args.log)
    last = log["epochs"][-1]
    sizes = log["dataset"]
    print(f"trained {cfg.model} on {sizes['train']}/{sizes['val']}/{sizes['test']} "
          f"train/val/test pairs")
    print(f"epoch {last['epoch']}: train loss {last['train_loss']:.4f}, "
          f"val accuracy {last['val_accuracy']:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    model, x, y = toy_setup(args.model, args.seed)
    err = gradient_check(model, x, y, h=args.step)
    ok = err < args.threshold
    print(f"max relative gradient error {err:.3e} "
          f"({'<' if ok else '>='} {args.threshold:g})")
    return 0 if ok else 1


def cmd_weights_info(args) -> int:
    tensors, meta = load_tensors(args.weights)
    for key, value in meta.items():
        print(f"{key} = {value}")
    total = 0
    for name, arr in tensors.items():
        total += arr.size
        shape = "x".join(str(d) for d in arr.shape) or "scalar"
        print(f"{name:24s} {str(arr.dtype):8s} {shape}")
    print(f"{len(tensors)} tensors, {total} values")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {"train": cmd_train, "gradcheck": cmd_gradcheck,
                   "weights-info": cmd_weights_info}[args.subcommand]
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except HsitrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
