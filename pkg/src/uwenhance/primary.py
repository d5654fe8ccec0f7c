"""Primary enhancement net: a purely per-pixel (1x1 convolution) pipeline whose
layers are modulated by affine parameters derived from the condition vector.
All spatial context enters through that vector, so the net runs at any
resolution and is equivariant to pixel permutations.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .config import ModelConfig

NORM_EPS = 1e-5


def style_modulate(x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    """Per-channel affine gamma * x + beta, broadcast over (H, W).

    gamma/beta may be (C,) or per-image (N, C).
    """
    if gamma.shape != beta.shape:
        raise ValueError(f"gamma/beta shape mismatch: {gamma.shape} vs {beta.shape}")
    if gamma.shape[-1] != x.shape[1]:
        raise ValueError(f"expected {x.shape[1]} channels, got {gamma.shape[-1]}")
    if gamma.ndim == 1:
        gamma = gamma[None]
        beta = beta[None]
    return x * gamma[:, :, None, None] + beta[:, :, None, None]


class StyleMapper(nn.Module):
    """Bias-free linear map from the condition vector to (gamma, beta).

    Zero-initialized so modulation starts as the identity: gamma = 1 + Wv,
    beta = Wv with W = 0 at creation.
    """

    def __init__(self, condition_width: int, channels: int):
        super().__init__()
        self.channels = channels
        self.proj = nn.Linear(condition_width, 2 * channels, bias=False)
        self.reset_identity()

    def reset_identity(self):
        nn.init.zeros_(self.proj.weight)

    def forward(self, v: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out = self.proj(v)
        gamma = 1.0 + out[:, : self.channels]
        beta = out[:, self.channels :]
        return gamma, beta


class TriBranchBlock(nn.Module):
    """Residual per-pixel block with three weight-independent branches.

    Channels are partitioned into three contiguous groups (the lineages of R,
    G, and B). Each branch expands its group with a 1x1 conv, normalizes over
    the whole branch (all its channels and pixels, per image) with a learned
    per-channel affine, applies a leaky rectifier, and projects back.
    """

    def __init__(self, width: int, expansion: int = 2):
        super().__init__()
        if width % 3 != 0:
            raise ValueError(f"width must be divisible by 3, got {width}")
        group = width // 3
        hidden = group * expansion
        self.branches = nn.ModuleList(
            nn.Sequential(
                nn.Conv2d(group, hidden, 1),
                nn.GroupNorm(1, hidden, eps=NORM_EPS),
                nn.LeakyReLU(0.2),
                nn.Conv2d(hidden, group, 1),
            )
            for _ in range(3)
        )

    def forward(self, x):
        parts = torch.chunk(x, 3, dim=1)
        return x + torch.cat([branch(p) for branch, p in zip(self.branches, parts)], dim=1)


class InstanceNormBlock(nn.Module):
    """Ablation substitute: one full-width branch with per-channel instance
    normalization instead of grouped branches."""

    def __init__(self, width: int, expansion: int = 2):
        super().__init__()
        hidden = width * expansion
        self.body = nn.Sequential(
            nn.Conv2d(width, hidden, 1),
            nn.InstanceNorm2d(hidden, eps=NORM_EPS, affine=True),
            nn.LeakyReLU(0.2),
            nn.Conv2d(hidden, width, 1),
        )

    def forward(self, x):
        return x + self.body(x)


class PlainBlock(nn.Module):
    """Baseline per-pixel block: two 1x1 convolutions, no normalization."""

    def __init__(self, width: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(width, width, 1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, width, 1),
        )

    def forward(self, x):
        return x + self.body(x)


def make_block(cfg: ModelConfig) -> nn.Module:
    if cfg.use_tri_branch:
        return TriBranchBlock(cfg.primary_width)
    if cfg.substitute_instance_norm:
        return InstanceNormBlock(cfg.primary_width)
    return PlainBlock(cfg.primary_width)


class PrimaryNet(nn.Module):
    """Stem 1x1 conv -> N x [block -> modulation] -> head 1x1 conv, with a
    global residual from the input and a final clamp to [0, 1]."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.act = nn.LeakyReLU(0.2)
        self.stem = nn.Conv2d(3, cfg.primary_width, 1)
        self.blocks = nn.ModuleList(make_block(cfg) for _ in range(cfg.primary_layers))
        self.mappers = nn.ModuleList(
            StyleMapper(cfg.condition_width, cfg.primary_width)
            for _ in range(cfg.primary_layers)
        )
        self.head = nn.Conv2d(cfg.primary_width, 3, 1)

    def forward(self, image, v, clamp: bool = True):
        feat = self.act(self.stem(image))
        for block, mapper in zip(self.blocks, self.mappers):
            gamma, beta = mapper(v)
            feat = style_modulate(block(feat), gamma, beta)
        out = image + self.head(feat)
        return out.clamp(0.0, 1.0) if clamp else out
