"""Image quality metrics: full-reference (MSE, PSNR, SSIM) and no-reference
underwater/naturalness scores (UCIQE, UIQM; NIQE lives in `niqe`).

All metrics take (N, C, H, W) arrays in [0, 1] and return python floats;
batched inputs are averaged per image. Conventions that the published
formulas leave open are fixed here and mirrored by the test oracles:

* MSE/PSNR are computed on unit-range intensities (peak = 1), PSNR capped at
  100 dB when the MSE falls below 1e-10.
* SSIM uses the standard 11x11 Gaussian window (sigma 1.5), stabilizers
  (0.01)^2 and (0.03)^2, computed on BT.601 luminance over valid windows.
* UCIQE: CIELAB with L*, a*, b* scaled by 1/100 so the three statistics live
  on comparable ranges; chroma is taken about the achromatic axis, luminance
  contrast is the spread between the 1% and 99% luminance quantiles, and
  saturation is chroma/luminance with a zero-luminance guard. Coefficients
  (0.4680, 0.2745, 0.2576).
* UIQM: computed on a 0..255 intensity scale. Colorfulness from asymmetric
  0.1-trimmed statistics of R-G and (R+G)/2-B; sharpness from Sobel edge maps
  weighted by the original channels via a log-ratio contrast over 8x8 blocks;
  contrast from the PLIP log ratio (gamma = 1026) over 8x8 blocks of the
  luminance. Blocks with a non-positive extremum contribute zero.
  Coefficients (0.0282, 0.2953, 3.5753).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imaging import ImageError, check_image, convert_colorspace, load_image

UCIQE_COEFFS = (0.4680, 0.2745, 0.2576)
UIQM_COEFFS = (0.0282, 0.2953, 3.5753)
UIQM_BLOCK = 8
UIQM_TRIM = 0.1
PLIP_GAMMA = 1026.0
PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def mse(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ImageError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    err = mse(x, y)
    if err < 1e-10:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / err))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2
    w = np.exp(-0.5 * (offsets / sigma) ** 2)
    return w / w.sum()


def _filter2(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, window, axis=0, mode="constant")
    out = ndimage.correlate1d(out, window, axis=1, mode="constant")
    pad = (len(window) - 1) // 2
    return out[pad:-pad, pad:-pad]


def _to_gray_planes(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 4:
        raise ImageError(f"expected rank-4 array, got shape {img.shape}")
    if img.shape[1] == 3:
        return convert_colorspace(img, "gray")[:, 0]
    if img.shape[1] == 1:
        return img[:, 0]
    raise ImageError(f"expected 1 or 3 channels, got {img.shape[1]}")


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    if np.asarray(x).shape != np.asarray(y).shape:
        raise ImageError(f"shape mismatch: {np.asarray(x).shape} vs {np.asarray(y).shape}")
    gx = _to_gray_planes(x)
    gy = _to_gray_planes(y)
    if min(gx.shape[1], gx.shape[2]) < SSIM_WINDOW:
        raise ImageError(f"image smaller than the {SSIM_WINDOW}px SSIM window")
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = 0.01**2
    c2 = 0.03**2
    scores = []
    for a, b in zip(gx, gy):
        ua = _filter2(a, window)
        ub = _filter2(b, window)
        va = _filter2(a * a, window) - ua * ua
        vb = _filter2(b * b, window) - ub * ub
        vab = _filter2(a * b, window) - ua * ub
        num = (2 * ua * ub + c1) * (2 * vab + c2)
        den = (ua * ua + ub * ub + c1) * (va + vb + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def uciqe(img: np.ndarray) -> float:
    img = check_image(img)
    lab = convert_colorspace(img, "lab") / 100.0
    scores = []
    for plane in lab:
        lum, a, b = plane[0], plane[1], plane[2]
        chroma = np.sqrt(a * a + b * b)
        sigma_chroma = float(np.std(chroma))
        contrast = float(np.quantile(lum, 0.99) - np.quantile(lum, 0.01))
        saturation = np.where(lum > 0, chroma / np.where(lum > 0, lum, 1.0), 0.0)
        mean_saturation = float(np.mean(saturation))
        c1, c2, c3 = UCIQE_COEFFS
        scores.append(c1 * sigma_chroma + c2 * contrast + c3 * mean_saturation)
    return float(np.mean(scores))


def _trimmed_stats(values: np.ndarray, trim: float) -> tuple[float, float]:
    flat = np.sort(values.ravel())
    k = flat.size
    drop = int(trim * k)
    kept = flat[drop : k - drop] if k > 2 * drop else flat
    mu = float(np.mean(kept))
    var = float(np.mean((flat - mu) ** 2))
    return mu, var


def _block_views(plane: np.ndarray, size: int) -> np.ndarray:
    h, w = plane.shape
    bh, bw = h // size, w // size
    if bh < 1 or bw < 1:
        raise ImageError(f"image smaller than one {size}x{size} block")
    cropped = plane[: bh * size, : bw * size]
    return cropped.reshape(bh, size, bw, size).transpose(0, 2, 1, 3).reshape(bh * bw, -1)


def _log_ratio_contrast(plane: np.ndarray, size: int) -> float:
    # 2/(k1 k2) * sum ln(max/min) over blocks, skipping non-positive extrema
    blocks = _block_views(plane, size)
    bmax = blocks.max(axis=1)
    bmin = blocks.min(axis=1)
    ok = (bmax > 0) & (bmin > 0)
    total = float(np.sum(np.log(bmax[ok] / bmin[ok])))
    return 2.0 / blocks.shape[0] * total


def _plip_log_contrast(plane: np.ndarray, size: int) -> float:
    # 1/(k1 k2) * sum t*ln(t) with t the PLIP (max - min)/(max + min) ratio
    blocks = _block_views(plane, size)
    bmax = blocks.max(axis=1)
    bmin = blocks.min(axis=1)
    top = PLIP_GAMMA * (bmax - bmin) / (PLIP_GAMMA - bmin)
    bot = bmax + bmin - bmax * bmin / PLIP_GAMMA
    ok = (top > 0) & (bot > 0)
    t = top[ok] / bot[ok]
    return float(np.sum(t * np.log(t))) / blocks.shape[0]


def _sobel_magnitude(plane: np.ndarray) -> np.ndarray:
    gx = ndimage.sobel(plane, axis=0, mode="reflect")
    gy = ndimage.sobel(plane, axis=1, mode="reflect")
    return np.sqrt(gx * gx + gy * gy)


def uicm(img: np.ndarray) -> float:
    img = check_image(img).astype(np.float64) * 255.0
    values = []
    for plane in img:
        r, g, b = plane
        rg = r - g
        yb = 0.5 * (r + g) - b
        mu_rg, var_rg = _trimmed_stats(rg, UIQM_TRIM)
        mu_yb, var_yb = _trimmed_stats(yb, UIQM_TRIM)
        values.append(
            -0.0268 * np.sqrt(mu_rg**2 + mu_yb**2) + 0.1586 * np.sqrt(var_rg + var_yb)
        )
    return float(np.mean(values))


def uism(img: np.ndarray) -> float:
    img = check_image(img).astype(np.float64) * 255.0
    weights = (0.299, 0.587, 0.114)
    values = []
    for plane in img:
        total = 0.0
        for weight, channel in zip(weights, plane):
            edges = _sobel_magnitude(channel) * channel
            total += weight * _log_ratio_contrast(edges, UIQM_BLOCK)
        values.append(total)
    return float(np.mean(values))


def uiconm(img: np.ndarray) -> float:
    img = check_image(img)
    gray = _to_gray_planes(img) * 255.0
    return float(np.mean([_plip_log_contrast(plane, UIQM_BLOCK) for plane in gray]))


def uiqm(img: np.ndarray) -> float:
    c1, c2, c3 = UIQM_COEFFS
    return c1 * uicm(img) + c2 * uism(img) + c3 * uiconm(img)


@dataclass
class MetricReport:
    per_image: dict[str, dict[str, float]] = field(default_factory=dict)
    count: int = 0

    @property
    def means(self) -> dict[str, float]:
        if not self.per_image:
            return {}
        names = list(next(iter(self.per_image.values())).keys())
        return {
            name: float(np.mean([row[name] for row in self.per_image.values()]))
            for name in names
        }

    def to_text(self) -> str:
        if not self.per_image:
            return "no images evaluated\n"
        names = list(next(iter(self.per_image.values())).keys())
        width = max(len(k) for k in list(self.per_image) + ["mean"]) + 2
        header = "image".ljust(width) + "".join(n.rjust(12) for n in names)
        lines = [header, "-" * len(header)]
        for image, row in self.per_image.items():
            lines.append(image.ljust(width) + "".join(f"{row[n]:12.4f}" for n in names))
        lines.append("-" * len(header))
        means = self.means
        lines.append("mean".ljust(width) + "".join(f"{means[n]:12.4f}" for n in names))
        lines.append(f"images: {self.count}")
        return "\n".join(lines) + "\n"

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"image": image, **row}, sort_keys=True)
            for image, row in self.per_image.items()
        ]
        lines.append(json.dumps({"aggregate": "mean", "count": self.count, **self.means}, sort_keys=True))
        return "\n".join(lines) + "\n"


def evaluate_dataset(
    pred_dir: str | Path,
    ref_dir: str | Path | None = None,
    niqe_model=None,
) -> MetricReport:
    """Score every image in pred_dir; full-reference columns only with ref_dir."""
    from . import niqe as niqe_mod

    pred_dir = Path(pred_dir)
    preds = sorted(p for p in pred_dir.glob("*") if p.suffix.lower() in {".png", ".jpg", ".jpeg"})
    if not preds:
        raise ImageError(f"no images in {pred_dir}")
    if ref_dir is not None:
        ref_dir = Path(ref_dir)
        missing = [p.name for p in preds if not (ref_dir / p.name).exists()]
        if missing:
            raise ImageError(f"reference images missing for: {missing[:5]}")

    report = MetricReport()
    for pred_path in preds:
        pred = load_image(pred_path)
        row: dict[str, float] = {}
        if ref_dir is not None:
            ref = load_image(ref_dir / pred_path.name)
            if ref.shape != pred.shape:
                raise ImageError(f"size mismatch for {pred_path.name}")
            row["psnr"] = psnr(pred, ref)
            row["ssim"] = ssim(pred, ref)
            row["mse"] = mse(pred, ref)
        row["uciqe"] = uciqe(pred)
        row["uiqm"] = uiqm(pred)
        if niqe_model is not None:
            row["niqe"] = niqe_mod.niqe_score(pred, niqe_model)
        report.per_image[pred_path.name] = row
        report.count += 1
    return report
