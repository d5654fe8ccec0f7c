"""Natural-image statistics quality score (no reference).

A pristine model is fitted offline: images are reduced to local
mean-subtracted, contrast-normalized (MSCN) luminance; each patch yields 18
features (a generalized-Gaussian fit of the MSCN coefficients plus asymmetric
generalized-Gaussian fits of four orientation-paired products), computed at
full and half resolution for 36 per patch. The model is the mean and
covariance of these features over sharp patches of a pristine corpus. An
image is scored by the Mahalanobis-type distance between its own feature
Gaussian and the model; lower is better.

Conventions fixed in code: luminance on a 0..255 scale, 7x7 Gaussian weights
(sigma 7/6) with zero-padded borders for the MSCN transform, non-overlapping
patches, half-resolution via 2x2 box averaging, and sharpness selection at
75% of the per-image maximum during fitting.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.special import gamma as gamma_fn

from . import checkpoint
from .imaging import ImageError, load_image
from .metrics import _to_gray_planes

FEATURE_DIM = 36
SHARPNESS_FRACTION = 0.75
_SHIFTS = ((0, 1), (1, 0), (1, 1), (-1, 1))

_GAMMA_GRID = np.arange(0.2, 10.001, 0.001)
# E[x^2] / E[|x|]^2 for a zero-mean GGD with shape alpha
_GGD_RATIO = gamma_fn(1.0 / _GAMMA_GRID) * gamma_fn(3.0 / _GAMMA_GRID) / gamma_fn(2.0 / _GAMMA_GRID) ** 2
# r-hat lookup for the asymmetric fit
_AGGD_RATIO = gamma_fn(2.0 / _GAMMA_GRID) ** 2 / (gamma_fn(1.0 / _GAMMA_GRID) * gamma_fn(3.0 / _GAMMA_GRID))


class NiqeError(ValueError):
    pass


@dataclass
class NiqeModel:
    mean: np.ndarray
    cov: np.ndarray
    patch_size: int
    regularized: bool = False

    def save(self, path: str | Path) -> None:
        checkpoint.save_arrays(
            path,
            {"mean": self.mean, "cov": self.cov},
            kind="niqe",
            meta={"patch_size": self.patch_size, "regularized": self.regularized},
        )

    @classmethod
    def load(cls, path: str | Path) -> "NiqeModel":
        arrays, header = checkpoint.load_arrays(path)
        if header["kind"] != "niqe":
            raise NiqeError(f"expected a niqe model file, got {header['kind']!r}")
        meta = header.get("meta", {})
        return cls(
            mean=arrays["mean"].astype(np.float64),
            cov=arrays["cov"].astype(np.float64),
            patch_size=int(meta["patch_size"]),
            regularized=bool(meta.get("regularized", False)),
        )


def _gauss_window(radius: int = 3, sigma: float = 7.0 / 6.0) -> np.ndarray:
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (offsets / sigma) ** 2)
    return w / w.sum()


def mscn_transform(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return MSCN coefficients and the local-deviation field of a 0..255 image."""
    window = _gauss_window()
    mu = ndimage.correlate1d(gray, window, axis=0, mode="constant")
    mu = ndimage.correlate1d(mu, window, axis=1, mode="constant")
    second = ndimage.correlate1d(gray * gray, window, axis=0, mode="constant")
    second = ndimage.correlate1d(second, window, axis=1, mode="constant")
    sigma = np.sqrt(np.abs(second - mu * mu))
    return (gray - mu) / (sigma + 1.0), sigma


def _fit_ggd(values: np.ndarray) -> tuple[float, float]:
    sigma_sq = float(np.mean(values**2))
    mean_abs = float(np.mean(np.abs(values)))
    if mean_abs == 0.0:
        return float(_GAMMA_GRID[-1]), sigma_sq
    rho = sigma_sq / mean_abs**2
    alpha = float(_GAMMA_GRID[np.argmin(np.abs(_GGD_RATIO - rho))])
    return alpha, sigma_sq


def _fit_aggd(values: np.ndarray) -> tuple[float, float, float, float]:
    flat = values.ravel()
    left = flat[flat < 0]
    right = flat[flat >= 0]
    left_std = float(np.sqrt(np.mean(left**2))) if left.size else 0.0
    right_std = float(np.sqrt(np.mean(right**2))) if right.size else 0.0
    gamma_hat = left_std / right_std if right_std > 0 else np.inf
    second = float(np.mean(flat**2))
    r_hat = float(np.mean(np.abs(flat))) ** 2 / second if second > 0 else np.inf
    with np.errstate(over="ignore", invalid="ignore"):
        r_norm = r_hat * (gamma_hat**3 + 1) * (gamma_hat + 1) / (gamma_hat**2 + 1) ** 2
    if not np.isfinite(r_norm):
        r_norm = _AGGD_RATIO[-1]
    alpha = float(_GAMMA_GRID[np.argmin((_AGGD_RATIO - r_norm) ** 2)])
    ratio = gamma_fn(2.0 / alpha) / gamma_fn(1.0 / alpha)
    scale = np.sqrt(gamma_fn(1.0 / alpha) / gamma_fn(3.0 / alpha))
    eta = (right_std - left_std) * ratio * scale
    return alpha, float(eta), left_std**2, right_std**2


def _patch_features(mscn: np.ndarray) -> np.ndarray:
    feats = list(_fit_ggd(mscn))
    for dy, dx in _SHIFTS:
        paired = mscn * np.roll(np.roll(mscn, dy, axis=0), dx, axis=1)
        feats.extend(_fit_aggd(paired))
    return np.asarray(feats)


def _halve(gray: np.ndarray) -> np.ndarray:
    h, w = gray.shape
    h2, w2 = h // 2 * 2, w // 2 * 2
    cropped = gray[:h2, :w2]
    return 0.25 * (cropped[0::2, 0::2] + cropped[0::2, 1::2] + cropped[1::2, 0::2] + cropped[1::2, 1::2])


def _image_features(gray: np.ndarray, patch: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-patch 36-vectors and per-patch sharpness for one 0..255 image."""
    rows, cols = gray.shape[0] // patch, gray.shape[1] // patch
    if rows < 1 or cols < 1:
        raise NiqeError(f"image smaller than one {patch}px patch")
    mscn_full, sigma = mscn_transform(gray)
    mscn_half, _ = mscn_transform(_halve(gray))

    features = []
    sharpness = []
    half = patch // 2
    for r in range(rows):
        for c in range(cols):
            window = (slice(r * patch, (r + 1) * patch), slice(c * patch, (c + 1) * patch))
            window_half = (slice(r * half, (r + 1) * half), slice(c * half, (c + 1) * half))
            full_feats = _patch_features(mscn_full[window])
            half_feats = _patch_features(mscn_half[window_half])
            features.append(np.concatenate([full_feats, half_feats]))
            sharpness.append(float(np.mean(sigma[window])))
    return np.asarray(features), np.asarray(sharpness)


def _gray255(img: np.ndarray) -> np.ndarray:
    return _to_gray_planes(img)[0] * 255.0


def niqe_fit(pristine_dir: str | Path, patch: int = 32) -> NiqeModel:
    """Fit the pristine feature Gaussian from a directory of images."""
    pristine_dir = Path(pristine_dir)
    paths = sorted(
        p for p in pristine_dir.glob("*") if p.suffix.lower() in {".png", ".jpg", ".jpeg"}
    )
    if len(paths) < 10:
        raise NiqeError(f"need at least 10 pristine images, found {len(paths)}")
    if patch < 8 or patch % 2:
        raise NiqeError("patch size must be an even integer >= 8")

    selected = []
    for path in paths:
        gray = _gray255(load_image(path))
        features, sharpness = _image_features(gray, patch)
        keep = sharpness > SHARPNESS_FRACTION * sharpness.max()
        if not keep.any():
            keep[:] = True
        selected.append(features[keep])
    stacked = np.vstack(selected)

    mean = stacked.mean(axis=0)
    cov = np.cov(stacked, rowvar=False)
    cov = 0.5 * (cov + cov.T)
    regularized = False
    if np.linalg.eigvalsh(cov).min() < 1e-10:
        cov = cov + 1e-6 * np.eye(cov.shape[0])
        regularized = True
    return NiqeModel(mean=mean, cov=cov, patch_size=patch, regularized=regularized)


def niqe_score(img: np.ndarray, model: NiqeModel) -> float:
    """Distance of the image's feature statistics from the pristine model (>= 0)."""
    gray = _gray255(img)
    patch = model.patch_size
    if (gray.shape[0] // patch) * (gray.shape[1] // patch) < 2:
        raise NiqeError(f"image too small: need at least two {patch}px patches")
    features, _ = _image_features(gray, patch)
    sample_mean = features.mean(axis=0)
    sample_cov = np.cov(features, rowvar=False)
    pooled = (model.cov + sample_cov) / 2.0
    diff = model.mean - sample_mean
    distance_sq = float(diff @ np.linalg.pinv(pooled) @ diff)
    return float(np.sqrt(max(distance_sq, 0.0)))
