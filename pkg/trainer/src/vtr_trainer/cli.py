"""Trainer command line: train (and export fixtures), export, gradcheck."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .data import make_dataset, make_image
from .export import export_fixtures
from .gradcheck import gradcheck, masked_diagonal_gets_no_gradient, zero_image_grads_finite
from .model import ModelConfig, build_reference_model
from .train import TrainConfig, train


def _toy_config(args) -> ModelConfig:
    return ModelConfig(patch=args.patch, dim=args.dim, depth=args.depth, heads=args.heads)


def _cmd_train(args) -> int:
    cfg = _toy_config(args)
    model = build_reference_model(cfg, seed=args.seed)
    data = make_dataset(args.seed, n_train=args.train_size, n_test=args.test_size)
    tcfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    result = train(model, data, tcfg)
    print(f"final loss {result.epoch_losses[-1]:.4f}  test accuracy {result.test_accuracy:.4f}")
    if args.out:
        rng = np.random.default_rng(args.seed + 1)
        images = [make_image(i % 4, rng) for i in range(args.samples)]
        manifest = export_fixtures(
            model,
            images,
            args.out,
            traced_samples=args.traced,
            extra={
                "training": {
                    "seed": args.seed,
                    "epochs": args.epochs,
                    "train_size": args.train_size,
                    "test_accuracy": round(result.test_accuracy, 4),
                    "accuracy_threshold": 0.9,
                }
            },
        )
        print(f"fixtures written: {manifest}")
    return 0


def _cmd_export(args) -> int:
    cfg = _toy_config(args)
    model = build_reference_model(cfg, seed=args.seed)
    rng = np.random.default_rng(args.seed + 1)
    images = [make_image(i % 4, rng) for i in range(args.samples)]
    manifest = export_fixtures(model, images, args.out, traced_samples=args.traced)
    print(f"fixtures written: {manifest}")
    return 0


def _cmd_gradcheck(args) -> int:
    report = gradcheck(seed=args.seed)
    for entry in report:
        print(f"{entry.name:<28} analytic {entry.analytic:+.6e}  "
              f"numeric {entry.numeric:+.6e}  rel {entry.rel_error:.2e}")
    ok_diag = masked_diagonal_gets_no_gradient(args.seed)
    ok_zero = zero_image_grads_finite(args.seed)
    print(f"masked diagonal zero-gradient: {'ok' if ok_diag else 'FAIL'}")
    print(f"zero-image gradients finite:   {'ok' if ok_zero else 'FAIL'}")
    return 0 if (ok_diag and ok_zero) else 1


def _add_model_flags(p):
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="vtr-trainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the toy model, optionally exporting fixtures")
    _add_model_flags(p)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--train-size", type=int, default=4096)
    p.add_argument("--test-size", type=int, default=512)
    p.add_argument("--out", help="fixture directory to export after training")
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--traced", type=int, default=3, help="samples that get full traces")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("export", help="export fixtures from a randomly initialized model")
    _add_model_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--traced", type=int, default=3)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
