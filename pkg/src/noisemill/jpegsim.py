"""JPEG compression-noise simulator.

A quality-factor-parameterized lossy round trip: BT.601 full-range YCbCr,
optional 4:2:0 chroma subsampling, 8x8 orthonormal DCT, quantization with
quality-scaled standard tables, and the inverse path.  Entropy coding is
omitted because it is lossless and contributes nothing to the artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft

from .imgcore import Image, RngStream, clip01

__all__ = ["JpegSpec", "sample_jpeg_spec", "jpeg_roundtrip"]

QUALITY_RANGE = (20, 95)

# Standard luminance/chrominance quantization tables (informative annex
# of the JPEG standard); these define what "quality factor" means.
LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

CHROMA_TABLE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)


@dataclass(frozen=True)
class JpegSpec:
    quality: int
    subsample_chroma: bool = True

    def __post_init__(self):
        if not QUALITY_RANGE[0] <= self.quality <= QUALITY_RANGE[1]:
            raise ValueError(f"quality must lie in {QUALITY_RANGE}")


def sample_jpeg_spec(rng: RngStream, quality_range=QUALITY_RANGE) -> JpegSpec:
    q = int(rng.integers(quality_range[0], quality_range[1]))
    return JpegSpec(quality=q, subsample_chroma=True)


def scaled_table(base: np.ndarray, quality: int) -> np.ndarray:
    """Quality scaling: scale=5000/q below 50 else 200-2q, entries in [1,255]."""
    s = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((base * s + 50.0) / 100.0), 1.0, 255.0)


def _pad_to_multiple8(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    ph, pw = (-h) % 8, (-w) % 8
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


def _quantize_roundtrip(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """DCT -> quantize -> dequantize -> inverse DCT, on a level-shifted plane."""
    h, w = plane.shape
    p = _pad_to_multiple8(plane)
    ph, pw = p.shape
    blocks = p.reshape(ph // 8, 8, pw // 8, 8).transpose(0, 2, 1, 3)
    coef = _fft.dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    quant = np.sign(coef) * np.floor(np.abs(coef) / table + 0.5) * table
    rec = _fft.idctn(quant, type=2, norm="ortho", axes=(-2, -1))
    rec = rec.transpose(0, 2, 1, 3).reshape(ph, pw)
    return rec[:h, :w]


def _box_down2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    if h % 2:
        plane = np.pad(plane, ((0, 1), (0, 0)), mode="edge")
    if w % 2:
        plane = np.pad(plane, ((0, 0), (0, 1)), mode="edge")
    return 0.25 * (plane[0::2, 0::2] + plane[0::2, 1::2]
                   + plane[1::2, 0::2] + plane[1::2, 1::2])


def _bilinear_up2(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """2x bilinear upsampling aligned with the 2x2 box subsampling grid."""
    h, w = plane.shape
    ys = (np.arange(out_h) + 0.5) / 2.0 - 0.5
    xs = (np.arange(out_w) + 0.5) / 2.0 - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(ys - np.floor(ys), 0.0, 1.0)[:, None]
    fx = np.clip(xs - np.floor(xs), 0.0, 1.0)[None, :]
    top = plane[y0][:, x0] * (1 - fx) + plane[y0][:, x1] * fx
    bot = plane[y1][:, x0] * (1 - fx) + plane[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def jpeg_roundtrip(img: Image, spec: JpegSpec) -> Image:
    """Simulate one encode/decode cycle; output dims equal input dims."""
    if img.channels != 3:
        raise ValueError("jpeg_roundtrip requires a 3-channel image")
    r, g, b = img.data.astype(np.float64) * 255.0
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168735892 * r - 0.331264108 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418687589 * g - 0.081312411 * b + 128.0

    h, w = y.shape
    lt = scaled_table(LUMA_TABLE, spec.quality)
    ct = scaled_table(CHROMA_TABLE, spec.quality)

    y2 = _quantize_roundtrip(y - 128.0, lt) + 128.0
    if spec.subsample_chroma:
        cb2 = _bilinear_up2(_quantize_roundtrip(_box_down2(cb) - 128.0, ct) + 128.0, h, w)
        cr2 = _bilinear_up2(_quantize_roundtrip(_box_down2(cr) - 128.0, ct) + 128.0, h, w)
    else:
        cb2 = _quantize_roundtrip(cb - 128.0, ct) + 128.0
        cr2 = _quantize_roundtrip(cr - 128.0, ct) + 128.0

    r2 = y2 + 1.402 * (cr2 - 128.0)
    g2 = y2 - 0.344136286 * (cb2 - 128.0) - 0.714136286 * (cr2 - 128.0)
    b2 = y2 + 1.772 * (cb2 - 128.0)
    out = np.stack([r2, g2, b2]) / 255.0
    return clip01(Image(out.astype(np.float32)))
