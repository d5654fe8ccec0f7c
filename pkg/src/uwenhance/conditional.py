"""Condition branch: frequency-domain gating, multi-scale spatial attention,
and the downsampling tower that pools them into a per-image condition vector.

Spatial convolutions here use periodic (circular) boundary handling, matching
the periodicity the Fourier gate already assumes. This makes the whole branch
equivariant to circular shifts, so the pooled condition vector is exactly
invariant to translations by multiples of the total stride.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .config import LargeKernelSpec, ModelConfig


def periodic_pad(x: torch.Tensor, pad_h: int, pad_w: int) -> torch.Tensor:
    """Wrap-around padding via modular indexing; allows pad larger than the input."""
    if pad_h == 0 and pad_w == 0:
        return x
    h, w = x.shape[-2], x.shape[-1]
    rows = torch.arange(-pad_h, h + pad_h, device=x.device) % h
    cols = torch.arange(-pad_w, w + pad_w, device=x.device) % w
    return x[..., rows[:, None], cols[None, :]]


class PeriodicConv2d(nn.Conv2d):
    """Conv2d with same-size periodic padding (odd kernels only)."""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, dilation=1, groups=1):
        if kernel_size % 2 == 0:
            raise ValueError("periodic convolution requires an odd kernel")
        super().__init__(
            in_channels,
            out_channels,
            kernel_size,
            stride=stride,
            padding=0,
            dilation=dilation,
            groups=groups,
        )
        self._wrap = dilation * (kernel_size // 2)

    def forward(self, x):
        return self._conv_forward(periodic_pad(x, self._wrap, self._wrap), self.weight, self.bias)


def split_spectrum(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-channel 2-D orthonormal FFT over (H, W), split into magnitude and phase."""
    spectrum = torch.fft.fft2(x, norm="ortho")
    return spectrum.abs(), spectrum.angle()


def merge_spectrum(magnitude: torch.Tensor, phase: torch.Tensor) -> torch.Tensor:
    """Inverse of `split_spectrum`; returns the real part."""
    spectrum = torch.polar(magnitude, phase)
    return torch.fft.ifft2(spectrum, norm="ortho").real


class FourierGate(nn.Module):
    """Residual block that rescales the Fourier magnitude of each feature map.

    The gate is a sigmoid over a two-layer pointwise stack applied to the
    magnitude spectrum. Because the gate is real and the phase is untouched,
    gating the magnitude equals multiplying the complex spectrum by the gate,
    and Hermitian symmetry (hence a real-valued output) is preserved.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.gate = nn.Sequential(
            nn.Conv2d(channels, channels, 1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(channels, channels, 1),
        )

    def forward(self, x):
        spectrum = torch.fft.fft2(x, norm="ortho")
        gate = torch.sigmoid(self.gate(spectrum.abs()))
        filtered = torch.fft.ifft2(spectrum * gate, norm="ortho").real
        return x + filtered


class LargeKernelBranch(nn.Module):
    """Depthwise large-kernel attention for one channel group.

    A shared depthwise convolution feeds both the value path and the
    attention path (depthwise dilated + pointwise); the output is their
    elementwise product.
    """

    def __init__(self, channels: int, scale: LargeKernelSpec):
        super().__init__()
        dw, dwd, d = scale.dw_kernel, scale.dwd_kernel, scale.dilation
        self.local = PeriodicConv2d(channels, channels, dw, groups=channels)
        self.spread = PeriodicConv2d(channels, channels, dwd, dilation=d, groups=channels)
        self.mix = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        value = self.local(x)
        attention = self.mix(self.spread(value))
        return attention * value


class MultiScaleAttention(nn.Module):
    """Residual two-scale attention: channels split in half, each half gated
    by a large-kernel branch at its own scale, then fused pointwise."""

    def __init__(self, channels: int, scales: tuple[LargeKernelSpec, LargeKernelSpec]):
        super().__init__()
        if channels % 2 != 0:
            raise ValueError(f"channel count must be even, got {channels}")
        half = channels // 2
        self.branch_a = LargeKernelBranch(half, scales[0])
        self.branch_b = LargeKernelBranch(half, scales[1])
        self.fuse = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        a, b = torch.chunk(x, 2, dim=1)
        mixed = self.fuse(torch.cat([self.branch_a(a), self.branch_b(b)], dim=1))
        return x + mixed


class ChannelGate(nn.Module):
    """Squeeze-excite channel attention (ablation substitute for the
    multi-scale branch)."""

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc = nn.Sequential(
            nn.Linear(channels, hidden),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden, channels),
        )

    def forward(self, x):
        squeeze = x.mean(dim=(2, 3))
        gate = torch.sigmoid(self.fc(squeeze))
        return x * gate[:, :, None, None]


class ConditionNet(nn.Module):
    """Stem conv, then `stages` of [stride-2 conv -> gate -> attention],
    globally pooled into a condition vector of length `condition_width`."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.act = nn.LeakyReLU(0.2)
        self.stem = PeriodicConv2d(3, cfg.stem_width, 3)
        self.stages = nn.ModuleList()
        width = cfg.stem_width
        for stage_width in cfg.stage_widths():
            layers: list[nn.Module] = [
                PeriodicConv2d(width, stage_width, 3, stride=2),
                nn.LeakyReLU(0.2),
            ]
            if cfg.use_fourier_gate:
                layers.append(FourierGate(stage_width))
            if cfg.use_ms_attention:
                layers.append(MultiScaleAttention(stage_width, cfg.attention_scales))
            elif cfg.substitute_channel_attention:
                layers.append(ChannelGate(stage_width))
            self.stages.append(nn.Sequential(*layers))
            width = stage_width

    def forward(self, x):
        height, width = x.shape[2], x.shape[3]
        if min(height, width) < self.cfg.min_input_size:
            raise ValueError(
                f"input {height}x{width} smaller than the {self.cfg.min_input_size}px minimum "
                f"for {self.cfg.stages} downsampling stages"
            )
        feat = self.act(self.stem(x))
        for stage in self.stages:
            feat = stage(feat)
        return feat.mean(dim=(2, 3))
