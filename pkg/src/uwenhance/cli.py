"""Single command-line entry point.

Subcommands: synth (build a synthetic dataset), train, enhance, evaluate,
benchmark, ablate, niqe-fit, and gradcheck. Exit codes: 0 success, 2
validation error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import gradcheck as gradcheck_mod
from .checkpoint import CheckpointError
from .config import ConfigError, ModelConfig
from .degradation import DegradationError, ParamRanges, SynthDatasetSpec, synthesize_dataset
from .imaging import ImageError, load_image, save_image
from .metrics import evaluate_dataset
from .model import load_model
from .niqe import NiqeError, NiqeModel, niqe_fit
from .training import (
    TrainingDivergedError,
    ablation_table,
    benchmark,
    load_config_file,
    run_ablation,
    train,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"--size expects HxW (e.g. 720x1080), got {text!r}") from None
    if h < 1 or w < 1:
        raise ValueError("--size dimensions must be positive")
    return h, w


def cmd_synth(args) -> int:
    spec = SynthDatasetSpec(
        source_dir=Path(args.source),
        output_dir=Path(args.out),
        count=args.count,
        seed=args.seed,
        ranges=ParamRanges(),
    )
    records = synthesize_dataset(spec)
    print(f"wrote {len(records)} pairs under {args.out} (manifest.jsonl)")
    return EXIT_OK


def cmd_train(args) -> int:
    model_cfg, train_cfg = load_config_file(args.config)
    result = train(model_cfg, train_cfg, resume=args.resume)
    if result.log.validations:
        last = result.log.validations[-1]
        print(f"final validation: psnr={last['psnr']:.3f} ssim={last['ssim']:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_enhance(args) -> int:
    import numpy as np
    import torch

    model = load_model(args.checkpoint)
    model.eval()
    source = Path(args.input)
    if source.is_dir():
        paths = sorted(p for p in source.glob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
        if not paths:
            raise ImageError(f"no images in {source}")
    else:
        paths = [source]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in paths:
        image = load_image(path)
        start = time.perf_counter()
        with torch.no_grad():
            enhanced = model(torch.from_numpy(image)).numpy()
        elapsed = time.perf_counter() - start
        if not np.all(np.isfinite(enhanced)):
            raise TrainingDivergedError(f"non-finite output for {path.name}")
        save_image(enhanced, out_dir / path.name)
        print(f"{path.name}: {elapsed:.3f}s")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = NiqeModel.load(args.niqe_model) if args.niqe_model else None
    report = evaluate_dataset(args.pred, ref_dir=args.ref, niqe_model=model)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".txt").write_text(report.to_text())
    out.with_suffix(".jsonl").write_text(report.to_jsonl())
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    if args.config:
        model_cfg, _ = load_config_file(args.config)
    else:
        model_cfg = ModelConfig()
    h, w = _parse_size(args.size)
    stats = benchmark(model_cfg, h, w, repetitions=args.repetitions)
    print(f"params:          {stats['params']}")
    print(f"macs @{h}x{w}:   {stats['macs'] / 1e9:.3f}G")
    print(f"median forward:  {stats['median_seconds']:.4f}s over {stats['repetitions']} runs")
    return EXIT_OK


def cmd_ablate(args) -> int:
    model_cfg, train_cfg = load_config_file(args.config)
    rows = run_ablation(model_cfg, train_cfg)
    table = ablation_table(rows)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table)
    print(table, end="")
    return EXIT_OK


def cmd_niqe_fit(args) -> int:
    model = niqe_fit(args.pristine, patch=args.patch)
    model.save(args.out)
    note = " (regularized)" if model.regularized else ""
    print(f"fitted {model.mean.size}-dim model from {args.pristine}{note} -> {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    scopes = gradcheck_mod.SCOPES if args.scope == "all" else (args.scope,)
    reports = [gradcheck_mod.run_scope(scope) for scope in scopes]
    for report in reports:
        print(report.to_text())
    if not all(report.passed for report in reports):
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwenhance",
        description="Underwater image enhancement: synthesize data, train, enhance, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize degraded/clean pairs from clean images")
    p.add_argument("--source", required=True, help="directory of clean RGB images")
    p.add_argument("--count", type=int, required=True, help="number of pairs to generate")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train from a YAML config (model: and train: sections)")
    p.add_argument("--config", required=True, help="YAML config file")
    p.add_argument("--resume", help="model checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="enhance an image or directory of images")
    p.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    p.add_argument("--input", required=True, help="input image file or directory")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="score a directory of images")
    p.add_argument("--pred", required=True, help="directory of images to score")
    p.add_argument("--ref", help="directory of reference images (enables PSNR/SSIM/MSE)")
    p.add_argument("--niqe-model", help="fitted naturalness model file")
    p.add_argument("--out", required=True, help="report path stem (.txt and .jsonl written)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="report params, analytic MACs, and forward latency")
    p.add_argument("--config", help="YAML config (defaults to the stock model)")
    p.add_argument("--size", default="720x1080", help="input size as HxW")
    p.add_argument("--repetitions", type=int, default=5, help="timed forward passes")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("ablate", help="train every toggle combination and tabulate results")
    p.add_argument("--config", required=True, help="YAML config file")
    p.add_argument("--out", help="write the table to this file as well")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("niqe-fit", help="fit the naturalness model from pristine images")
    p.add_argument("--pristine", required=True, help="directory of pristine images")
    p.add_argument("--patch", type=int, default=32, help="patch size in pixels")
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(func=cmd_niqe_fit)

    p = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    p.add_argument(
        "--scope",
        default="all",
        choices=list(gradcheck_mod.SCOPES) + ["all"],
        help="which component to check",
    )
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, CheckpointError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ImageError, ConfigError, DegradationError, NiqeError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
