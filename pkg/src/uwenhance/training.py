"""Training loop: Adam with a triangular cyclic learning rate, seeded
augmentation, per-epoch validation, checkpointing with exact resume, the
ablation harness, and the efficiency benchmark.

Every stochastic choice (validation split, epoch ordering, per-sample
augmentation) is drawn from an RNG stream derived from (seed, purpose, epoch,
step), so a single-worker run is bitwise reproducible and a resumed run
continues the interrupted trajectory exactly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import yaml

from . import checkpoint as ckpt
from .config import ABLATION_SETTINGS, ModelConfig, ablation_config
from .degradation import read_manifest
from .imaging import AugmentSpec, augment_pair, load_image
from .losses import FeatureExtractor, LossConfig, total_loss
from .metrics import psnr, ssim
from .model import EnhancerNet, build_model, count_flops, count_params, load_model, save_model


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or gradient becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    manifest: Path
    out_dir: Path
    epochs: int = 30
    batch_size: int = 8
    patch_size: int = 64
    lr_base: float = 1e-5
    lr_max: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    cycle_epochs: float = 2.0
    loss: LossConfig = field(default_factory=LossConfig)
    flip_prob: float = 0.5
    rotations: tuple[int, ...] = (0, 90, 180, 270)
    val_fraction: float = 0.1
    checkpoint_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.lr_base <= self.lr_max:
            raise ValueError("need 0 < lr_base <= lr_max")
        if not all(0 < b < 1 for b in self.betas):
            raise ValueError("betas must lie in (0, 1)")
        if self.patch_size < 16:
            raise ValueError("patch_size must be >= 16")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")


@dataclass
class TrainLog:
    steps: list[dict] = field(default_factory=list)
    validations: list[dict] = field(default_factory=list)

    def save(self, path: str | Path) -> None:
        import json

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for record in self.steps:
                fh.write(json.dumps({"type": "step", **record}, sort_keys=True) + "\n")
            for record in self.validations:
                fh.write(json.dumps({"type": "val", **record}, sort_keys=True) + "\n")


@dataclass
class TrainResult:
    model: EnhancerNet
    log: TrainLog
    checkpoint_path: Path
    optimizer_path: Path


def cyclic_lr(step: int, lr_base: float, lr_max: float, half_period: int) -> float:
    """Triangular schedule: lr_base at step 0, lr_max after half_period steps,
    back to lr_base after a full period, repeating."""
    if step < 0:
        raise ValueError("step must be >= 0")
    cycle = math.floor(1 + step / (2 * half_period))
    x = abs(step / half_period - 2 * cycle + 1)
    return lr_base + (lr_max - lr_base) * max(0.0, 1.0 - x)


@dataclass
class AdamState:
    step: int
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]

    @classmethod
    def fresh(cls, params: dict[str, torch.Tensor]) -> "AdamState":
        return cls(
            step=0,
            m={k: torch.zeros_like(p) for k, p in params.items()},
            v={k: torch.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update, in place on params and state."""
    beta1, beta2 = betas
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            if not torch.isfinite(g).all():
                raise TrainingDivergedError(f"non-finite gradient in {name}")
            m = state.m[name]
            v = state.v[name]
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            p.add_((m / bc1) / ((v / bc2).sqrt() + eps), alpha=-lr)


class PairDataset:
    """All degraded/clean pairs from a manifest, preloaded as float32 arrays."""

    def __init__(self, records: list[dict]):
        if not records:
            raise ValueError("empty manifest")
        self.degraded = [load_image(r["degraded"]) for r in records]
        self.clean = [load_image(r["clean"]) for r in records]

    def __len__(self):
        return len(self.degraded)


def _split_indices(n: int, val_fraction: float, seed: int) -> tuple[list[int], list[int]]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    order = rng.permutation(n)
    n_val = int(round(val_fraction * n)) if n > 1 else 0
    return sorted(int(i) for i in order[n_val:]), sorted(int(i) for i in order[:n_val])


def _augment_seed(seed: int, epoch: int, step: int, slot: int) -> int:
    return int(np.random.SeedSequence([seed, 301, epoch, step, slot]).generate_state(1)[0])


def _validate(model: EnhancerNet, data: PairDataset, indices: list[int]) -> dict:
    model.eval()
    psnrs, ssims = [], []
    with torch.no_grad():
        for i in indices:
            x = torch.from_numpy(data.degraded[i])
            out = model(x).numpy()
            psnrs.append(psnr(out, data.clean[i]))
            ssims.append(ssim(out, data.clean[i]))
    model.train()
    return {"psnr": float(np.mean(psnrs)), "ssim": float(np.mean(ssims))}


def _save_optimizer(path: Path, state: AdamState, epoch: int) -> None:
    arrays = {f"m.{k}": v.numpy() for k, v in state.m.items()}
    arrays.update({f"v.{k}": v.numpy() for k, v in state.v.items()})
    ckpt.save_arrays(path, arrays, kind="optimizer", meta={"step": state.step, "epoch": epoch})


def _load_optimizer(path: Path, params: dict[str, torch.Tensor]) -> tuple[AdamState, int]:
    arrays, header = ckpt.load_arrays(path)
    state = AdamState.fresh(params)
    for key in params:
        state.m[key] = torch.from_numpy(arrays[f"m.{key}"])
        state.v[key] = torch.from_numpy(arrays[f"v.{key}"])
    state.step = int(header["meta"]["step"])
    return state, int(header["meta"]["epoch"])


def optimizer_path_for(model_path: Path) -> Path:
    return model_path.with_name(model_path.stem + ".opt" + model_path.suffix)


def train(
    model_cfg: ModelConfig, train_cfg: TrainConfig, resume: str | Path | None = None
) -> TrainResult:
    """Run the full loop; returns the trained model, log, and checkpoint paths.

    With `resume`, weights and optimizer state are loaded from the given
    model checkpoint (plus its .opt sidecar) and training continues from the
    recorded epoch, reproducing the uninterrupted trajectory bit for bit.
    """
    out_dir = Path(train_cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    data = PairDataset(read_manifest(train_cfg.manifest))
    train_idx, val_idx = _split_indices(len(data), train_cfg.val_fraction, train_cfg.seed)
    if not train_idx:
        raise ValueError("no training samples after validation split")
    steps_per_epoch = math.ceil(len(train_idx) / train_cfg.batch_size)
    half_period = max(1, round(train_cfg.cycle_epochs * steps_per_epoch))

    start_epoch = 0
    if resume is None:
        model = build_model(model_cfg)
        params = dict(model.named_parameters())
        state = AdamState.fresh(params)
    else:
        resume = Path(resume)
        model = load_model(resume)
        if model.cfg.fingerprint() != model_cfg.fingerprint():
            raise ckpt.CheckpointError("resume checkpoint was built from a different model config")
        params = dict(model.named_parameters())
        state, start_epoch = _load_optimizer(optimizer_path_for(resume), params)

    extractor = FeatureExtractor(train_cfg.loss.extractor_seed)
    log = TrainLog()
    model.train()

    last_model_path = out_dir / "model_init.uwck"
    save_model(last_model_path, model)
    _save_optimizer(optimizer_path_for(last_model_path), state, start_epoch)

    for epoch in range(start_epoch, train_cfg.epochs):
        order_rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 201, epoch]))
        order = [train_idx[i] for i in order_rng.permutation(len(train_idx))]
        for step_in_epoch, batch_start in enumerate(range(0, len(order), train_cfg.batch_size)):
            batch = order[batch_start : batch_start + train_cfg.batch_size]
            xs, ys = [], []
            for slot, index in enumerate(batch):
                spec = AugmentSpec(
                    crop_size=train_cfg.patch_size,
                    flip_prob=train_cfg.flip_prob,
                    rotations=train_cfg.rotations,
                    seed=_augment_seed(train_cfg.seed, epoch, step_in_epoch, slot),
                )
                raw, ref = augment_pair(data.degraded[index], data.clean[index], spec)
                xs.append(raw)
                ys.append(ref)
            x = torch.from_numpy(np.concatenate(xs))
            y = torch.from_numpy(np.concatenate(ys))

            global_step = epoch * steps_per_epoch + step_in_epoch
            lr = cyclic_lr(global_step, train_cfg.lr_base, train_cfg.lr_max, half_period)

            out = model(x)
            loss, parts = total_loss(out, y, train_cfg.loss, extractor)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at step {global_step}; last checkpoint: {last_model_path}"
                )
            model.zero_grad(set_to_none=False)
            loss.backward()
            grads = {name: p.grad for name, p in params.items()}
            adam_step(params, grads, state, lr, train_cfg.betas, train_cfg.adam_eps)

            log.steps.append(
                {
                    "step": global_step,
                    "epoch": epoch,
                    "lr": lr,
                    "loss": float(loss.detach()),
                    **parts,
                }
            )

        if val_idx:
            log.validations.append({"epoch": epoch, **_validate(model, data, val_idx)})

        if (epoch + 1) % train_cfg.checkpoint_every == 0 or epoch + 1 == train_cfg.epochs:
            last_model_path = out_dir / f"model_ep{epoch + 1:04d}.uwck"
            save_model(last_model_path, model)
            _save_optimizer(optimizer_path_for(last_model_path), state, epoch + 1)

    final_path = out_dir / "model_final.uwck"
    save_model(final_path, model)
    _save_optimizer(optimizer_path_for(final_path), state, train_cfg.epochs)
    log.save(out_dir / "train_log.jsonl")
    return TrainResult(
        model=model,
        log=log,
        checkpoint_path=final_path,
        optimizer_path=optimizer_path_for(final_path),
    )


def run_ablation(
    base_cfg: ModelConfig, train_cfg: TrainConfig, settings=ABLATION_SETTINGS
) -> list[dict]:
    """Train every toggle combination identically; report params and held-out
    quality per variant."""
    rows = []
    for name, toggles in settings:
        cfg = ablation_config(base_cfg, toggles)
        variant_cfg = replace(train_cfg, out_dir=Path(train_cfg.out_dir) / name)
        result = train(cfg, variant_cfg)
        row = {"setting": name, "params": count_params(cfg)}
        if result.log.validations:
            row["psnr"] = result.log.validations[-1]["psnr"]
            row["ssim"] = result.log.validations[-1]["ssim"]
        rows.append(row)
    return rows


def ablation_table(rows: list[dict]) -> str:
    lines = [f"{'setting':<32}{'params':>10}{'psnr':>10}{'ssim':>10}"]
    for row in rows:
        psnr_s = f"{row['psnr']:.3f}" if "psnr" in row else "-"
        ssim_s = f"{row['ssim']:.4f}" if "ssim" in row else "-"
        lines.append(f"{row['setting']:<32}{row['params']:>10}{psnr_s:>10}{ssim_s:>10}")
    return "\n".join(lines) + "\n"


def benchmark(model_cfg: ModelConfig, h: int = 720, w: int = 1080, repetitions: int = 5) -> dict:
    """Parameter count, analytic MACs, and median wall-time per forward pass."""
    model = build_model(model_cfg)
    model.eval()
    rng = np.random.default_rng(np.random.SeedSequence([model_cfg.seed, 401]))
    x = torch.from_numpy(rng.random((1, 3, h, w), dtype=np.float32))
    times = []
    with torch.inference_mode():
        model(x)
        for _ in range(repetitions):
            start = time.perf_counter()
            model(x)
            times.append(time.perf_counter() - start)
    return {
        "params": count_params(model_cfg),
        "macs": count_flops(model_cfg, h, w),
        "median_seconds": float(np.median(times)),
        "height": h,
        "width": w,
        "repetitions": repetitions,
    }


def _as_tuple(value):
    return tuple(value) if isinstance(value, (list, tuple)) else value


def train_config_from_dict(data: dict) -> TrainConfig:
    data = dict(data)
    if "loss" in data and not isinstance(data["loss"], LossConfig):
        loss = dict(data["loss"])
        if "perceptual_layers" in loss:
            loss["perceptual_layers"] = tuple(loss["perceptual_layers"])
        data["loss"] = LossConfig(**loss)
    for key in ("betas", "rotations"):
        if key in data:
            data[key] = _as_tuple(data[key])
    for key in ("manifest", "out_dir"):
        if key in data:
            data[key] = Path(data[key])
    return TrainConfig(**data)


def load_config_file(path: str | Path) -> tuple[ModelConfig, TrainConfig]:
    """Parse the declarative YAML config holding `model:` and `train:` sections."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    model_cfg = ModelConfig.from_dict(data.get("model", {}))
    if "train" not in data:
        raise ValueError(f"config file {path} has no 'train' section")
    return model_cfg, train_config_from_dict(data["train"])
