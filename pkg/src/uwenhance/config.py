"""Architecture configuration, including the ablation toggle sets."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

from .checkpoint import config_fingerprint


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LargeKernelSpec:
    """Decomposition of a nominal large kernel K into a depthwise pair.

    A (2d-1)x(2d-1) depthwise convolution followed by a ceil(K/d)-sized
    depthwise convolution with dilation d covers a receptive field of about K
    with far fewer weights than a dense KxK kernel.
    """

    nominal: int
    dilation: int

    @property
    def dw_kernel(self) -> int:
        return 2 * self.dilation - 1

    @property
    def dwd_kernel(self) -> int:
        return math.ceil(self.nominal / self.dilation)

    @property
    def receptive_field(self) -> int:
        return self.dw_kernel + (self.dwd_kernel - 1) * self.dilation

    def validate(self) -> None:
        if self.dilation < 2:
            raise ConfigError(f"dilation must be >= 2, got {self.dilation}")
        if self.dwd_kernel % 2 == 0:
            raise ConfigError(
                f"ceil({self.nominal}/{self.dilation}) = {self.dwd_kernel} is even; "
                "dilated kernel must be odd for symmetric padding"
            )
        if not (self.nominal <= self.receptive_field < self.nominal + 2 * self.dilation):
            raise ConfigError(
                f"decomposition covers {self.receptive_field}, too far from nominal {self.nominal}"
            )


DEFAULT_SCALES = (LargeKernelSpec(nominal=21, dilation=3), LargeKernelSpec(nominal=10, dilation=2))


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the enhancement network; fully determines the weight set.

    The primary net is a stack of `primary_layers` per-pixel blocks of width
    `primary_width` (a multiple of 3, one third per color lineage), each
    followed by per-channel affine modulation driven by the condition vector.
    The condition net downsamples `stages` times, doubling channels from
    `stem_width` up to `condition_width`.
    """

    primary_layers: int = 3
    primary_width: int = 48
    condition_width: int = 32
    stem_width: int = 16
    stages: int = 3
    attention_scales: tuple[LargeKernelSpec, LargeKernelSpec] = DEFAULT_SCALES
    use_tri_branch: bool = True
    use_fourier_gate: bool = True
    use_ms_attention: bool = True
    substitute_instance_norm: bool = False
    substitute_channel_attention: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.primary_layers < 1:
            raise ConfigError("primary_layers must be >= 1")
        if self.primary_width % 3 != 0:
            raise ConfigError(f"primary_width must be divisible by 3, got {self.primary_width}")
        if self.stages < 1 or self.stem_width < 1 or self.condition_width < 1:
            raise ConfigError("stages, stem_width, and condition_width must be >= 1")
        if self.use_tri_branch and self.substitute_instance_norm:
            raise ConfigError("use_tri_branch and substitute_instance_norm are exclusive")
        if self.use_ms_attention and self.substitute_channel_attention:
            raise ConfigError("use_ms_attention and substitute_channel_attention are exclusive")
        for scale in self.attention_scales:
            scale.validate()
        widths = self.stage_widths()
        if widths[-1] != self.condition_width:
            raise ConfigError(
                f"condition_width {self.condition_width} unreachable from stem_width "
                f"{self.stem_width} in {self.stages} doubling stages (got {widths})"
            )
        if self.use_ms_attention and any(w % 2 for w in widths):
            raise ConfigError(f"attention stages need even widths, got {widths}")

    def stage_widths(self) -> list[int]:
        widths = []
        w = self.stem_width
        for _ in range(self.stages):
            w = min(2 * w, self.condition_width)
            widths.append(w)
        return widths

    @property
    def min_input_size(self) -> int:
        return 2**self.stages

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        scales = data.get("attention_scales")
        if scales is not None:
            data["attention_scales"] = tuple(
                s if isinstance(s, LargeKernelSpec) else LargeKernelSpec(**s) for s in scales
            )
        return cls(**data)

    def fingerprint(self) -> str:
        return config_fingerprint(self.to_dict())

    def with_toggles(self, **toggles) -> "ModelConfig":
        return replace(self, **toggles)


# The seven toggle combinations exercised by the ablation harness: a plain
# per-pixel baseline, each block added or substituted in isolation, and the
# full model.
ABLATION_SETTINGS: tuple[tuple[str, dict], ...] = (
    ("baseline", dict()),
    ("tri-branch", dict(use_tri_branch=True)),
    ("instance-norm", dict(substitute_instance_norm=True)),
    ("tri-branch+fourier-gate", dict(use_tri_branch=True, use_fourier_gate=True)),
    ("tri-branch+ms-attention", dict(use_tri_branch=True, use_ms_attention=True)),
    ("tri-branch+channel-attention", dict(use_tri_branch=True, substitute_channel_attention=True)),
    ("full", dict(use_tri_branch=True, use_fourier_gate=True, use_ms_attention=True)),
)


def ablation_config(base: ModelConfig, toggles: dict) -> ModelConfig:
    """Build one ablation variant: all toggles off, then apply the given ones."""
    off = dict(
        use_tri_branch=False,
        use_fourier_gate=False,
        use_ms_attention=False,
        substitute_instance_norm=False,
        substitute_channel_attention=False,
    )
    off.update(toggles)
    return base.with_toggles(**off)
