"""Image I/O, color-space conversions, and paired geometric augmentation.

Images are exchanged as rank-4 float arrays of shape (N, C, H, W) with
intensities in [0, 1], RGB channel order. 8-bit PNG is the canonical
interchange format; 16-bit PNG and JPEG are accepted on input.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

VALID_ROTATIONS = (0, 90, 180, 270)

# Row-vector matrices applied to linear-light RGB (sRGB standard, D65,
# 2-degree observer). The reference white is the matrix's own row sums, so
# the achromatic axis maps to a* = b* = 0 exactly.
SRGB_TO_XYZ = np.array(
    [
        [0.412453, 0.357580, 0.180423],
        [0.212671, 0.715160, 0.072169],
        [0.019334, 0.119193, 0.950227],
    ]
)
D65_WHITE = SRGB_TO_XYZ.sum(axis=1)

# ITU-R BT.601 luma weights, used for GRAY and the Y plane of YCbCr.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class ImageError(ValueError):
    """Raised for unreadable files, bad shapes, or out-of-range values."""


def check_image(img: np.ndarray, channels: int | None = 3, unit_range: bool = True) -> np.ndarray:
    """Validate an (N, C, H, W) image tensor at a pipeline boundary."""
    img = np.asarray(img)
    if img.ndim != 4:
        raise ImageError(f"expected rank-4 (N, C, H, W) array, got shape {img.shape}")
    if channels is not None and img.shape[1] != channels:
        raise ImageError(f"expected {channels} channels, got {img.shape[1]}")
    if not np.all(np.isfinite(img)):
        raise ImageError("image contains non-finite values")
    if unit_range and (img.min() < -1e-6 or img.max() > 1 + 1e-6):
        raise ImageError(f"values outside [0, 1]: min={img.min():.4g} max={img.max():.4g}")
    return img


def load_image(path: str | Path) -> np.ndarray:
    """Load an 8- or 16-bit RGB raster image as a (1, 3, H, W) float32 array in [0, 1]."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageError(f"unsupported or corrupt image file: {path}")
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise ImageError(f"expected a 3-channel RGB image, got shape {raw.shape}: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageError(f"unsupported sample depth {raw.dtype}: {path}")
    rgb = raw[:, :, ::-1].astype(np.float32) / scale
    return np.ascontiguousarray(rgb.transpose(2, 0, 1)[None])


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Write a (1, 3, H, W) array to an 8-bit PNG, clamping to [0, 1] first."""
    img = np.asarray(img)
    if img.ndim != 4 or img.shape[0] != 1 or img.shape[1] != 3:
        raise ImageError(f"expected shape (1, 3, H, W), got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ImageError("refusing to save non-finite values")
    path = Path(path)
    quantized = np.rint(np.clip(img[0], 0.0, 1.0) * 255.0).astype(np.uint8)
    bgr = np.ascontiguousarray(quantized.transpose(1, 2, 0)[:, :, ::-1])
    ok = cv2.imwrite(str(path), bgr)
    if not ok:
        raise OSError(f"could not write image: {path}")


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _lab_f(t: np.ndarray) -> np.ndarray:
    delta = 6.0 / 29.0
    return np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)


def _rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    # rgb: (N, 3, H, W) in [0, 1] -> CIELAB with L* in [0, 100]
    linear = _srgb_to_linear(rgb)
    xyz = np.einsum("ij,njhw->nihw", SRGB_TO_XYZ, linear)
    fxyz = _lab_f(xyz / D65_WHITE[None, :, None, None])
    lab = np.empty_like(fxyz)
    lab[:, 0] = 116.0 * fxyz[:, 1] - 16.0
    lab[:, 1] = 500.0 * (fxyz[:, 0] - fxyz[:, 1])
    lab[:, 2] = 200.0 * (fxyz[:, 1] - fxyz[:, 2])
    return lab


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    # H in [0, 1) turns (red = 0), S and V in [0, 1]
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    vmax = rgb.max(axis=1)
    vmin = rgb.min(axis=1)
    delta = vmax - vmin
    sat = np.where(vmax > 0, delta / np.where(vmax > 0, vmax, 1.0), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        safe = np.where(delta > 0, delta, 1.0)
        hr = ((g - b) / safe) % 6.0
        hg = (b - r) / safe + 2.0
        hb = (r - g) / safe + 4.0
    hue = np.where(vmax == r, hr, np.where(vmax == g, hg, hb)) / 6.0
    hue = np.where(delta > 0, hue, 0.0)
    return np.stack([hue, sat, vmax], axis=1)


def _rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    # Full-range BT.601: Y in [0, 1], Cb/Cr centered at 0.5
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    y = LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
    cb = 0.5 + (b - y) / 1.772
    cr = 0.5 + (r - y) / 1.402
    return np.stack([y, cb, cr], axis=1)


def convert_colorspace(img: np.ndarray, target: str) -> np.ndarray:
    """Convert an RGB image tensor to LAB, HSV, YCbCr, or luminance grayscale.

    Returns float64; LAB keeps its natural scale (L* in [0, 100]), the other
    targets stay in [0, 1]. GRAY yields a single channel.
    """
    img = check_image(img).astype(np.float64)
    target = target.lower()
    if target == "lab":
        return _rgb_to_lab(img)
    if target == "hsv":
        return _rgb_to_hsv(img)
    if target == "ycbcr":
        return _rgb_to_ycbcr(img)
    if target == "gray":
        return np.einsum("c,nchw->nhw", LUMA_WEIGHTS, img)[:, None]
    raise ImageError(f"unknown color space: {target!r}")


@dataclass(frozen=True)
class AugmentSpec:
    """Seeded geometric augmentation: crop, then rotate, then flip."""

    crop_size: int
    flip_prob: float = 0.5
    rotations: tuple[int, ...] = VALID_ROTATIONS
    seed: int = 0

    def __post_init__(self):
        if self.crop_size < 1:
            raise ImageError("crop_size must be >= 1")
        if not self.rotations:
            raise ImageError("rotation set must be non-empty")
        bad = set(self.rotations) - set(VALID_ROTATIONS)
        if bad:
            raise ImageError(f"rotations must be multiples of 90 degrees, got {sorted(bad)}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ImageError("flip_prob must be in [0, 1]")


def augment_pair(
    raw: np.ndarray, ref: np.ndarray, spec: AugmentSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Apply one seeded crop/rotate/flip transform identically to both images."""
    raw = np.asarray(raw)
    ref = np.asarray(ref)
    if raw.shape != ref.shape:
        raise ImageError(f"pair shape mismatch: {raw.shape} vs {ref.shape}")
    if raw.ndim != 4:
        raise ImageError(f"expected rank-4 arrays, got shape {raw.shape}")
    h, w = raw.shape[2], raw.shape[3]
    c = spec.crop_size
    if c > min(h, w):
        raise ImageError(f"crop_size {c} exceeds image size {h}x{w}")

    rng = np.random.default_rng(spec.seed)
    top = int(rng.integers(0, h - c + 1))
    left = int(rng.integers(0, w - c + 1))
    angle = int(rng.choice(np.asarray(spec.rotations)))
    flip = bool(rng.random() < spec.flip_prob)

    def transform(x: np.ndarray) -> np.ndarray:
        out = x[:, :, top : top + c, left : left + c]
        if angle:
            out = np.rot90(out, k=angle // 90, axes=(2, 3))
        if flip:
            out = out[:, :, :, ::-1]
        return np.ascontiguousarray(out)

    return transform(raw), transform(ref)
