"""Finite-difference verification of every differentiable operation.

Each scope builds a small float64 instance with seeded random weights,
evaluates a scalar (the sum of the outputs), and compares autograd gradients
against central finite differences with step 1e-4, elementwise, for the input
and every parameter tensor. The reported error for a tensor is
max|analytic - numeric| / max(||analytic||_inf, ||numeric||_inf, 1e-8).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .conditional import FourierGate, MultiScaleAttention
from .config import DEFAULT_SCALES, ModelConfig
from .losses import FeatureExtractor, LossConfig, charbonnier, perceptual, total_loss
from .model import EnhancerNet
from .primary import StyleMapper, TriBranchBlock, style_modulate

STEP = 1e-4
DEFAULT_TOLERANCE = 1e-4
FULL_MODEL_TOLERANCE = 1e-3
CHARBONNIER_TOLERANCE = 1e-5

SCOPES = (
    "fourier-gate",
    "ms-attention",
    "tri-branch",
    "modulation",
    "stem-head",
    "losses",
    "full",
)


@dataclass
class GradCheckEntry:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


@dataclass
class GradCheckReport:
    scope: str
    entries: list[GradCheckEntry] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    @property
    def max_error(self) -> float:
        return max(entry.error for entry in self.entries)

    def to_text(self) -> str:
        lines = [f"scope {self.scope}: {'PASS' if self.passed else 'FAIL'} ({self.seconds:.1f}s)"]
        for entry in self.entries:
            mark = "ok  " if entry.passed else "FAIL"
            lines.append(f"  {mark} {entry.name:<42} rel_err={entry.error:.3e} tol={entry.tolerance:.0e}")
        return "\n".join(lines)


def _fd_gradient(fn, tensor: torch.Tensor, step: float = STEP) -> torch.Tensor:
    grad = torch.zeros_like(tensor)
    flat = tensor.data.view(-1)
    grad_flat = grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            original = flat[i].item()
            flat[i] = original + step
            plus = float(fn())
            flat[i] = original - step
            minus = float(fn())
            flat[i] = original
            grad_flat[i] = (plus - minus) / (2.0 * step)
    return grad


def _relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    scale = max(analytic.abs().max().item(), numeric.abs().max().item(), 1e-8)
    return (analytic - numeric).abs().max().item() / scale


def _compare(fn, leaves: dict[str, torch.Tensor], tolerance: float, prefix: str = "") -> list[GradCheckEntry]:
    output = fn()
    analytic = torch.autograd.grad(output, list(leaves.values()))
    entries = []
    for (name, leaf), grad in zip(leaves.items(), analytic):
        numeric = _fd_gradient(fn, leaf)
        entries.append(GradCheckEntry(prefix + name, _relative_error(grad, numeric), tolerance))
    return entries


def _random_tensor(shape, seed, scale=1.0) -> torch.Tensor:
    rng = np.random.default_rng(np.random.SeedSequence([seed, *shape]))
    return torch.from_numpy(rng.normal(0.0, scale, size=shape)).double()


def _randomize_parameters(module: nn.Module, seed: int, scale: float = 0.3) -> None:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC4]))
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.from_numpy(rng.normal(0.0, scale, size=tuple(p.shape))))


def _module_entries(module: nn.Module, x: torch.Tensor, tolerance: float) -> list[GradCheckEntry]:
    module = module.double()
    x = x.clone().requires_grad_(True)
    leaves = {"input": x}
    leaves.update({name: p for name, p in module.named_parameters()})
    return _compare(lambda: module(x).sum(), leaves, tolerance)


def _scope_fourier_gate() -> list[GradCheckEntry]:
    gate = FourierGate(4)
    _randomize_parameters(gate, seed=11)
    return _module_entries(gate, _random_tensor((1, 4, 8, 8), seed=12), DEFAULT_TOLERANCE)


def _scope_ms_attention() -> list[GradCheckEntry]:
    attn = MultiScaleAttention(4, DEFAULT_SCALES)
    _randomize_parameters(attn, seed=21)
    return _module_entries(attn, _random_tensor((1, 4, 8, 8), seed=22), DEFAULT_TOLERANCE)


def _scope_tri_branch() -> list[GradCheckEntry]:
    block = TriBranchBlock(6)
    _randomize_parameters(block, seed=31)
    return _module_entries(block, _random_tensor((1, 6, 8, 8), seed=32), DEFAULT_TOLERANCE)


def _scope_modulation() -> list[GradCheckEntry]:
    mapper = StyleMapper(4, 6).double()
    _randomize_parameters(mapper, seed=41)
    x = _random_tensor((1, 6, 8, 8), seed=42).requires_grad_(True)
    v = _random_tensor((1, 4), seed=43).requires_grad_(True)

    def fn():
        gamma, beta = mapper(v)
        return style_modulate(x, gamma, beta).sum()

    leaves = {"input": x, "condition": v}
    leaves.update({name: p for name, p in mapper.named_parameters()})
    return _compare(fn, leaves, DEFAULT_TOLERANCE)


def _scope_stem_head() -> list[GradCheckEntry]:
    stack = nn.Sequential(nn.Conv2d(3, 6, 1), nn.LeakyReLU(0.2), nn.Conv2d(6, 3, 1))
    _randomize_parameters(stack, seed=51)
    return _module_entries(stack, _random_tensor((1, 3, 8, 8), seed=52), DEFAULT_TOLERANCE)


def _scope_losses() -> list[GradCheckEntry]:
    cfg = LossConfig()
    extractor = FeatureExtractor(seed=0).double()
    x = _random_tensor((1, 3, 16, 16), seed=61, scale=0.25).requires_grad_(True)
    y = _random_tensor((1, 3, 16, 16), seed=62, scale=0.25)

    entries = _compare(
        lambda: charbonnier(x, y, cfg.epsilon), {"x": x}, CHARBONNIER_TOLERANCE, prefix="charbonnier."
    )
    entries += _compare(
        lambda: perceptual(x, y, extractor, cfg.perceptual_layers),
        {"x": x},
        DEFAULT_TOLERANCE,
        prefix="perceptual.",
    )
    entries += _compare(
        lambda: total_loss(x, y, cfg, extractor)[0], {"x": x}, DEFAULT_TOLERANCE, prefix="total."
    )
    return entries


def tiny_config(seed: int = 0) -> ModelConfig:
    return ModelConfig(
        primary_layers=1,
        primary_width=6,
        condition_width=4,
        stem_width=4,
        stages=1,
        seed=seed,
    )


def _scope_full() -> list[GradCheckEntry]:
    model = EnhancerNet(tiny_config()).double()
    _randomize_parameters(model, seed=71, scale=0.2)
    x = _random_tensor((1, 3, 8, 8), seed=72, scale=0.3)
    x = (0.5 + 0.2 * x).clamp(0.05, 0.95).requires_grad_(True)
    leaves = {"input": x}
    leaves.update({name: p for name, p in model.named_parameters()})
    return _compare(lambda: model(x, clamp=False).sum(), leaves, FULL_MODEL_TOLERANCE)


_SCOPE_FNS = {
    "fourier-gate": _scope_fourier_gate,
    "ms-attention": _scope_ms_attention,
    "tri-branch": _scope_tri_branch,
    "modulation": _scope_modulation,
    "stem-head": _scope_stem_head,
    "losses": _scope_losses,
    "full": _scope_full,
}


def run_scope(scope: str) -> GradCheckReport:
    if scope not in _SCOPE_FNS:
        raise ValueError(f"unknown scope {scope!r}; choose from {SCOPES}")
    start = time.perf_counter()
    entries = _SCOPE_FNS[scope]()
    return GradCheckReport(scope=scope, entries=entries, seconds=time.perf_counter() - start)


def run_all(scopes=SCOPES) -> list[GradCheckReport]:
    return [run_scope(scope) for scope in scopes]
