"""Whole-volume image quality metrics: PSNR, NMSE and 3D SSIM.

Each volume is rescaled to [0, 1] on its own min/max before scoring, and the
scores are always computed on aggregated volumes rather than patches.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import ndimage

from .validation import check_same_shape
from .volume import Volume

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
REPORT_COLUMNS = ("volume_id", "psnr_db", "nmse", "ssim")


@dataclass
class MetricReport:
    psnr_db: float
    nmse: float
    ssim: float
    volume_id: str = ""


def _arr(v) -> np.ndarray:
    return np.asarray(v.voxels if isinstance(v, Volume) else v, dtype=np.float64)


def rescale_unit_interval(v):
    """Map to [0, 1] using the volume's own min and max. Returns the input's type."""
    x = _arr(v)
    lo, hi = x.min(), x.max()
    if not hi > lo:
        raise ValueError("degenerate intensity range: volume is constant")
    out = (x - lo) / (hi - lo)
    out[x == hi] = 1.0
    if isinstance(v, Volume):
        return v.with_voxels(out)
    return out


def psnr(pred, ref) -> float:
    """Peak signal-to-noise ratio in dB for data range 1; ``inf`` for identical inputs."""
    p, r = _arr(pred), _arr(ref)
    check_same_shape(p, r)
    mse = np.mean((p - r) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(1.0 / mse))


def nmse(pred, ref) -> float:
    p, r = _arr(pred), _arr(ref)
    check_same_shape(p, r)
    denom = np.sum(r**2)
    if denom == 0:
        raise ValueError("nmse undefined for an all-zero reference")
    return float(np.sum((r - p) ** 2) / denom)


def gaussian_window_1d(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _valid_filter(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable weighted mean, keeping only positions where the window fits
    for axis in range(x.ndim):
        x = ndimage.correlate1d(x, g, axis=axis, mode="constant")
    r = len(g) // 2
    return x[tuple(slice(r, s - r) for s in x.shape)]


def ssim_map(pred, ref, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA, data_range: float = 1.0) -> np.ndarray:
    p, r = _arr(pred), _arr(ref)
    check_same_shape(p, r)
    if window % 2 == 0:
        raise ValueError("window size must be odd")
    if any(s < window for s in p.shape):
        raise ValueError(f"volume {p.shape} smaller than SSIM window {window}")
    g = gaussian_window_1d(window, sigma)
    mu_p = _valid_filter(p, g)
    mu_r = _valid_filter(r, g)
    var_p = _valid_filter(p * p, g) - mu_p**2
    var_r = _valid_filter(r * r, g) - mu_r**2
    cov = _valid_filter(p * r, g) - mu_p * mu_r
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2 * mu_p * mu_r + c1) * (2 * cov + c2)
    den = (mu_p**2 + mu_r**2 + c1) * (var_p + var_r + c2)
    return num / den


def ssim(pred, ref, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    """Mean local SSIM over every position where the 3D Gaussian window fits."""
    return float(np.mean(ssim_map(pred, ref, window, sigma)))


def evaluate_pair(pred, ref, volume_id: str = "") -> MetricReport:
    p = rescale_unit_interval(_arr(pred))
    r = rescale_unit_interval(_arr(ref))
    return MetricReport(psnr(p, r), nmse(p, r), ssim(p, r), volume_id)


def summarize(reports: Iterable[MetricReport]) -> dict[str, float]:
    """Mean and standard deviation of each metric (infinite PSNR values excluded)."""
    reports = list(reports)
    out: dict[str, float] = {"n": float(len(reports))}
    for name in ("psnr_db", "nmse", "ssim"):
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        vals = vals[np.isfinite(vals)]
        out[f"{name}_mean"] = float(vals.mean()) if vals.size else math.nan
        out[f"{name}_sd"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return out


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def write_report_csv(reports: Iterable[MetricReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([r.volume_id, _fmt(r.psnr_db), _fmt(r.nmse), _fmt(r.ssim)])
    return path


def read_report_csv(path) -> list[MetricReport]:
    with open(path, newline="") as fh:
        return [
            MetricReport(float(row["psnr_db"]), float(row["nmse"]), float(row["ssim"]), row["volume_id"])
            for row in csv.DictReader(fh)
        ]
