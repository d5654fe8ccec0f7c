"""Underwater image enhancement at desk scale: a per-pixel primary net
modulated by a frequency/spatial condition branch, a physics-based
degradation simulator for self-generated training pairs, losses, quality
metrics, and a seeded training loop.
"""

from .config import ABLATION_SETTINGS, LargeKernelSpec, ModelConfig
from .degradation import (
    DegradationParams,
    DepthSpec,
    ParamRanges,
    SynthDatasetSpec,
    degrade,
    invert_degrade,
    synthesize_dataset,
    transmission_map,
)
from .imaging import AugmentSpec, augment_pair, convert_colorspace, load_image, save_image
from .losses import FeatureExtractor, LossConfig, charbonnier, perceptual, total_loss
from .metrics import MetricReport, evaluate_dataset, mse, psnr, ssim, uciqe, uiqm
from .model import EnhancerNet, build_model, count_flops, count_params, load_model, save_model
from .niqe import NiqeModel, niqe_fit, niqe_score
from .training import TrainConfig, adam_step, benchmark, cyclic_lr, run_ablation, train

__version__ = "0.1.0"

__all__ = [
    "ABLATION_SETTINGS",
    "AugmentSpec",
    "DegradationParams",
    "DepthSpec",
    "EnhancerNet",
    "FeatureExtractor",
    "LargeKernelSpec",
    "LossConfig",
    "MetricReport",
    "ModelConfig",
    "NiqeModel",
    "ParamRanges",
    "SynthDatasetSpec",
    "TrainConfig",
    "adam_step",
    "augment_pair",
    "benchmark",
    "build_model",
    "charbonnier",
    "convert_colorspace",
    "count_flops",
    "count_params",
    "cyclic_lr",
    "degrade",
    "evaluate_dataset",
    "invert_degrade",
    "load_image",
    "load_model",
    "mse",
    "niqe_fit",
    "niqe_score",
    "perceptual",
    "psnr",
    "run_ablation",
    "save_image",
    "save_model",
    "ssim",
    "synthesize_dataset",
    "total_loss",
    "train",
    "transmission_map",
    "uciqe",
    "uiqm",
]
