"""Reconstruction and perceptual losses.

The reconstruction term is the smoothed absolute error
mean(sqrt((x - y)^2 + eps^2)), differentiable everywhere including x = y. The
perceptual term compares feature maps from a fixed convolutional extractor at
two stages, each stage normalized by its channel count and spatial size. The
extractor is pluggable: by default a seeded random stack, but any weight file
in the common checkpoint container (e.g. converted pretrained weights) can be
loaded through the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from . import checkpoint

EXTRACTOR_CHANNELS = (16, 32, 64, 64)


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = 1e-3
    rec_weight: float = 1.0
    perceptual_weight: float = 0.2
    perceptual_layers: tuple[int, int] = (2, 3)
    extractor_seed: int = 0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.rec_weight < 0 or self.perceptual_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if len(self.perceptual_layers) != 2:
            raise ValueError("exactly two perceptual stages are compared")
        if any(not 1 <= j <= len(EXTRACTOR_CHANNELS) for j in self.perceptual_layers):
            raise ValueError(f"perceptual_layers must be in 1..{len(EXTRACTOR_CHANNELS)}")


def charbonnier(x: torch.Tensor, y: torch.Tensor, epsilon: float = 1e-3) -> torch.Tensor:
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    # hypot(d, eps) = sqrt(d^2 + eps^2) evaluated without rounding the square,
    # so the zero-difference value is exactly eps
    eps = torch.as_tensor(epsilon, dtype=x.dtype, device=x.device)
    return torch.hypot(x - y, eps).mean()


class FeatureExtractor(nn.Module):
    """Fixed (never trained) stack of stride-2 conv stages used by the
    perceptual loss. Stage j halves the resolution j times."""

    def __init__(self, seed: int = 0):
        super().__init__()
        self.seed = seed
        self.stages = nn.ModuleList()
        in_ch = 3
        for out_ch in EXTRACTOR_CHANNELS:
            self.stages.append(
                nn.Sequential(nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1), nn.ReLU())
            )
            in_ch = out_ch
        self._seed_weights(seed)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def _seed_weights(self, seed: int):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFE]))
        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                fan_in = module.in_channels * 9
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=tuple(module.weight.shape))
                with torch.no_grad():
                    module.weight.copy_(torch.from_numpy(w).to(module.weight.dtype))
                    module.bias.zero_()

    def forward(self, x) -> list[torch.Tensor]:
        outputs = []
        feat = x
        for stage in self.stages:
            feat = stage(feat)
            outputs.append(feat)
        return outputs

    def save(self, path: str | Path) -> None:
        arrays = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        checkpoint.save_arrays(path, arrays, kind="extractor", meta={"seed": self.seed})

    @classmethod
    def load(cls, path: str | Path) -> "FeatureExtractor":
        arrays, header = checkpoint.load_arrays(path)
        extractor = cls(seed=header.get("meta", {}).get("seed", 0))
        state = {k: torch.from_numpy(v) for k, v in arrays.items()}
        extractor.load_state_dict(state, strict=True)
        for p in extractor.parameters():
            p.requires_grad_(False)
        return extractor


def perceptual(
    x: torch.Tensor,
    y: torch.Tensor,
    extractor: FeatureExtractor,
    layers: tuple[int, ...] = (2, 3),
) -> torch.Tensor:
    """Sum over the chosen stages of mean absolute feature difference."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    depth = max(layers)
    if min(x.shape[2], x.shape[3]) < 2**depth:
        raise ValueError(f"image too small for {depth} extractor downsamplings")
    fx = extractor(x)
    fy = extractor(y)
    total = x.new_zeros(())
    for j in layers:
        total = total + (fx[j - 1] - fy[j - 1]).abs().mean()
    return total


def total_loss(
    x: torch.Tensor,
    y: torch.Tensor,
    cfg: LossConfig,
    extractor: FeatureExtractor,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Weighted sum of the two terms; differentiable in x throughout."""
    rec = charbonnier(x, y, cfg.epsilon)
    perc = perceptual(x, y, extractor, cfg.perceptual_layers)
    total = cfg.rec_weight * rec + cfg.perceptual_weight * perc
    return total, {
        "reconstruction": float(rec.detach()),
        "perceptual": float(perc.detach()),
    }
