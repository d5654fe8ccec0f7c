"""Full enhancement model: condition branch + primary net, deterministic
initialization, checkpointing, and analytic parameter/MAC accounting.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from . import checkpoint
from .conditional import ConditionNet
from .config import ModelConfig
from .primary import PrimaryNet, StyleMapper


class EnhancerNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.condition = ConditionNet(cfg)
        self.primary = PrimaryNet(cfg)

    def forward(self, image, clamp: bool = True):
        v = self.condition(image)
        return self.primary(image, v, clamp=clamp)


def init_parameters(model: nn.Module, seed: int) -> None:
    """Deterministic init from a numpy stream: Kaiming-style normal weights,
    zero biases, unit norms; style mappers stay zeroed (identity modulation)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1D]))
    for _, module in model.named_modules():
        if isinstance(module, nn.Conv2d):
            fan_in = (module.in_channels // module.groups) * math.prod(module.kernel_size)
            _fill_normal(module.weight, rng, math.sqrt(2.0 / fan_in))
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Linear):
            _fill_normal(module.weight, rng, math.sqrt(2.0 / module.in_features))
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, (nn.GroupNorm, nn.InstanceNorm2d)):
            if module.weight is not None:
                nn.init.ones_(module.weight)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
    for _, module in model.named_modules():
        if isinstance(module, StyleMapper):
            module.reset_identity()


def _fill_normal(param: torch.Tensor, rng: np.random.Generator, std: float) -> None:
    values = rng.normal(0.0, std, size=tuple(param.shape))
    with torch.no_grad():
        param.copy_(torch.from_numpy(values).to(param.dtype))


def build_model(cfg: ModelConfig) -> EnhancerNet:
    model = EnhancerNet(cfg)
    init_parameters(model, cfg.seed)
    return model


def count_params(cfg: ModelConfig) -> int:
    """Exact scalar weight count of primary + condition nets."""
    return sum(p.numel() for p in EnhancerNet(cfg).parameters())


def save_model(path: str | Path, model: EnhancerNet) -> None:
    arrays = {name: tensor.detach().cpu().numpy() for name, tensor in model.state_dict().items()}
    checkpoint.save_arrays(
        path,
        arrays,
        kind="model",
        config=model.cfg.to_dict(),
        meta={"seed": model.cfg.seed},
    )


def load_model(path: str | Path) -> EnhancerNet:
    arrays, header = checkpoint.load_arrays(path)
    if header["kind"] != "model":
        raise checkpoint.CheckpointError(f"expected a model checkpoint, got {header['kind']!r}")
    cfg = ModelConfig.from_dict(header["config"])
    model = EnhancerNet(cfg)
    state = {name: torch.from_numpy(value) for name, value in arrays.items()}
    model.load_state_dict(state, strict=True)
    return model


def _conv_out(size: int) -> int:
    # stride-2, kernel 3, padding 1
    return (size + 1) // 2


def flop_breakdown(cfg: ModelConfig, h: int, w: int) -> dict[str, int]:
    """Analytic multiply-accumulate counts for one image, split by kind.

    Conventions: a convolution contributes C_in * C_out * k^2 * H_out * W_out
    / groups MACs; a linear map C_in * C_out; each 2-D FFT (forward or
    inverse) contributes 5 * H * W * log2(H * W) per channel. Elementwise
    products, activations, normalizations, and pooling are not counted.
    """
    conv = 0
    fft = 0
    linear = 0

    # condition branch
    ch, cw = h, w
    conv += 3 * cfg.stem_width * 9 * ch * cw
    prev = cfg.stem_width
    for width in cfg.stage_widths():
        ch, cw = _conv_out(ch), _conv_out(cw)
        conv += prev * width * 9 * ch * cw
        if cfg.use_fourier_gate:
            fft += round(2 * width * 5 * ch * cw * math.log2(ch * cw))
            conv += 2 * width * width * ch * cw
        if cfg.use_ms_attention:
            half = width // 2
            for scale in cfg.attention_scales:
                conv += half * (scale.dw_kernel**2) * ch * cw
                conv += half * (scale.dwd_kernel**2) * ch * cw
                conv += half * half * ch * cw
            conv += width * width * ch * cw
        elif cfg.substitute_channel_attention:
            hidden = max(1, width // 4)
            linear += 2 * width * hidden
        prev = width

    # primary net, full resolution throughout
    pw = cfg.primary_width
    conv += 3 * pw * h * w
    if cfg.use_tri_branch:
        group = pw // 3
        per_block = 3 * (2 * group * (group * 2)) * h * w
    elif cfg.substitute_instance_norm:
        per_block = 2 * pw * (pw * 2) * h * w
    else:
        per_block = 2 * pw * pw * h * w
    conv += cfg.primary_layers * per_block
    linear += cfg.primary_layers * cfg.condition_width * 2 * pw
    conv += pw * 3 * h * w

    return {"conv": conv, "fft": fft, "linear": linear}


def count_flops(cfg: ModelConfig, h: int, w: int) -> int:
    """Total analytic MACs for a single image of size h x w."""
    return sum(flop_breakdown(cfg, h, w).values())
