"""Fidelity metrics and noise-statistics estimators used for validation.

All estimators are deterministic, accumulate in float64, and gate residual
statistics away from near-clipped pixels so generator moments stay unbiased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as _ndi

from .imgcore import Image

__all__ = [
    "NoiseStats",
    "psnr",
    "ssim",
    "estimate_noise_stats",
    "variance_vs_mean_slope",
    "blockiness",
]

CLIP_GATE = (0.05, 0.95)


def psnr(a: Image, b: Image) -> float:
    """10*log10(1/MSE) on the [0,1] scale; +inf for identical images."""
    if a.shape != b.shape:
        raise ValueError("psnr: dimension mismatch")
    mse = float(np.mean((a.data.astype(np.float64) - b.data.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window_1d(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _ssim_plane(x: np.ndarray, y: np.ndarray, k1=0.01, k2=0.03) -> float:
    win = _gaussian_window_1d()
    pad = (win.size - 1) // 2

    def smooth(a):
        t = _ndi.correlate1d(a, win, axis=0, mode="nearest")
        return _ndi.correlate1d(t, win, axis=1, mode="nearest")

    mx, my = smooth(x), smooth(y)
    mxx, myy, mxy = smooth(x * x), smooth(y * y), smooth(x * y)
    vx = mxx - mx * mx
    vy = myy - my * my
    cxy = mxy - mx * my
    c1, c2 = k1**2, k2**2  # dynamic range 1
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    m = num / den
    return float(m[pad:-pad, pad:-pad].mean())


def ssim(a: Image, b: Image) -> float:
    """Single-scale SSIM, 11x11 Gaussian window sigma=1.5, averaged over channels."""
    if a.shape != b.shape:
        raise ValueError("ssim: dimension mismatch")
    if a.height < 11 or a.width < 11:
        raise ValueError("ssim: image smaller than the 11x11 window")
    vals = [_ssim_plane(a.data[c].astype(np.float64), b.data[c].astype(np.float64))
            for c in range(a.channels)]
    return float(np.mean(vals))


@dataclass(frozen=True)
class NoiseStats:
    mean: np.ndarray            # per channel
    covariance: np.ndarray      # 3x3 empirical
    lag1_autocorr: tuple[float, float]  # (vertical, horizontal)
    sample_count: int


def estimate_noise_stats(noisy: Image, clean: Image,
                         gate=CLIP_GATE) -> NoiseStats:
    """Moments of the residual noisy - clean over non-clipped pixels."""
    if noisy.shape != clean.shape:
        raise ValueError("dimension mismatch")
    if noisy.channels != 3:
        raise ValueError("estimate_noise_stats requires 3-channel images")
    res = noisy.data.astype(np.float64) - clean.data.astype(np.float64)
    valid = np.all((clean.data >= gate[0]) & (clean.data <= gate[1]), axis=0)
    n = int(valid.sum())
    if n < 1000:
        raise ValueError(f"too few valid pixels ({n} < 1000)")
    samples = res[:, valid]                      # (3, n)
    mean = samples.mean(axis=1)
    centered = samples - mean[:, None]
    cov = (centered @ centered.T) / (n - 1)
    cov = 0.5 * (cov + cov.T)

    def lag1(axis):
        d = res - res.mean(axis=(1, 2), keepdims=True)
        if axis == 0:
            prod = (d[:, :-1, :] * d[:, 1:, :]).mean()
        else:
            prod = (d[:, :, :-1] * d[:, :, 1:]).mean()
        var = (d * d).mean()
        return float(prod / var) if var > 0 else 0.0

    return NoiseStats(mean=mean, covariance=cov,
                      lag1_autocorr=(lag1(0), lag1(1)), sample_count=n)


def variance_vs_mean_slope(pairs) -> float:
    """Least-squares slope of variance against mean over >= 3 points."""
    pts = np.asarray(list(pairs), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("need >= 3 (mean, variance) points")
    m, v = pts[:, 0], pts[:, 1]
    dm = m - m.mean()
    denom = float(np.dot(dm, dm))
    if denom == 0.0:
        raise ValueError("degenerate: all means equal")
    return float(np.dot(dm, v - v.mean()) / denom)


def blockiness(img: Image) -> float:
    """Excess gradient energy on 8-aligned boundaries; 1.0 means no block
    structure, larger values indicate JPEG-style blocking."""
    if img.height < 16 or img.width < 16:
        raise ValueError("blockiness needs dims >= 16")
    data = img.data.astype(np.float64)
    h, w = img.height, img.width

    dh = np.abs(np.diff(data, axis=2))   # gradient between columns j, j+1
    dv = np.abs(np.diff(data, axis=1))
    col_edges = np.arange(7, w - 1, 8)   # boundary between 8k-1 and 8k
    row_edges = np.arange(7, h - 1, 8)
    col_mask = np.zeros(w - 1, dtype=bool)
    col_mask[col_edges] = True
    row_mask = np.zeros(h - 1, dtype=bool)
    row_mask[row_edges] = True

    on = float(dh[:, :, col_mask].sum() + dv[:, row_mask, :].sum())
    n_on = dh[:, :, col_mask].size + dv[:, row_mask, :].size
    off = float(dh[:, :, ~col_mask].sum() + dv[:, ~row_mask, :].sum())
    n_off = dh[:, :, ~col_mask].size + dv[:, ~row_mask, :].size
    mean_on = on / n_on
    mean_off = off / n_off
    if mean_on == 0.0 and mean_off == 0.0:
        return 1.0
    if mean_off == 0.0:
        return math.inf
    return mean_on / mean_off
