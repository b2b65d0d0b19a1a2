"""Bilinear/bicubic resizing with center-aligned coordinates and anti-aliased
downscaling, applied identically to both branches of a degradation pair.

The coordinate convention is source = (dst + 0.5) / scale - 0.5, which makes
scale 1.0 a bit-exact identity.  When scale < 1 the kernel support is widened
by 1/scale so downscaling is properly band-limited.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .imgcore import Image, RngStream

__all__ = ["ResizeKernel", "ResizeSpec", "sample_resize_spec", "resize", "resize_pair"]

SCALE_RANGE = (0.5, 2.0)


class ResizeKernel(enum.Enum):
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"


@dataclass(frozen=True)
class ResizeSpec:
    kernel: ResizeKernel
    scale: float
    out_height: int
    out_width: int

    def __post_init__(self):
        if not SCALE_RANGE[0] <= self.scale <= SCALE_RANGE[1]:
            raise ValueError(f"scale must lie in {SCALE_RANGE}")
        if self.out_height < 1 or self.out_width < 1:
            raise ValueError("output dims must be >= 1")

    @staticmethod
    def for_dims(kernel: ResizeKernel, scale: float,
                 in_height: int, in_width: int) -> "ResizeSpec":
        # round-half-up keeps the dim rule platform-stable at exact .5
        return ResizeSpec(kernel, scale,
                          max(1, int(np.floor(in_height * scale + 0.5))),
                          max(1, int(np.floor(in_width * scale + 0.5))))


def sample_resize_spec(rng: RngStream, in_dims: tuple[int, int],
                       scale_range=SCALE_RANGE) -> ResizeSpec:
    kernel = ResizeKernel.BILINEAR if rng.uniform() < 0.5 else ResizeKernel.BICUBIC
    scale = float(rng.uniform(scale_range[0], scale_range[1]))
    return ResizeSpec.for_dims(kernel, scale, in_dims[0], in_dims[1])


def _kernel_bicubic(x: np.ndarray) -> np.ndarray:
    # Keys kernel, a = -0.5
    a = -0.5
    ax = np.abs(x)
    return np.where(
        ax <= 1.0, (a + 2.0) * ax**3 - (a + 3.0) * ax**2 + 1.0,
        np.where(ax < 2.0, a * ax**3 - 5.0 * a * ax**2 + 8.0 * a * ax - 4.0 * a, 0.0))


def _kernel_bilinear(x: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.abs(x))


_KERNELS = {
    ResizeKernel.BICUBIC: (_kernel_bicubic, 2.0),
    ResizeKernel.BILINEAR: (_kernel_bilinear, 1.0),
}


def _axis_weights(n_in: int, n_out: int, scale: float,
                  kernel: ResizeKernel) -> tuple[np.ndarray, np.ndarray]:
    """Per-output-pixel source indices and normalized interpolation weights."""
    kfun, support = _KERNELS[kernel]
    src = (np.arange(n_out, dtype=np.float64) + 0.5) / scale - 0.5
    widen = max(1.0, 1.0 / scale)
    radius = support * widen
    left = np.floor(src - radius).astype(np.int64) + 1
    ntaps = int(np.ceil(2.0 * radius)) + 2
    idx = left[:, None] + np.arange(ntaps)[None, :]
    w = kfun((src[:, None] - idx) / widen)
    w /= w.sum(axis=1, keepdims=True)
    return np.clip(idx, 0, n_in - 1), w


def _axis_matrix(n_in: int, n_out: int, scale: float,
                 kernel: ResizeKernel) -> np.ndarray:
    """Dense (n_out, n_in) interpolation matrix; rows sum to 1."""
    idx, w = _axis_weights(n_in, n_out, scale, kernel)
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (np.arange(n_out)[:, None], idx), w)
    return mat


def resize(img: Image, spec: ResizeSpec) -> Image:
    wy = _axis_matrix(img.height, spec.out_height, spec.scale, spec.kernel)
    wx = _axis_matrix(img.width, spec.out_width, spec.scale, spec.kernel)
    data = img.data.astype(np.float64)
    rows = np.tensordot(wy, data, (1, 1)).transpose(1, 0, 2)
    out = rows @ wx.T
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


def resize_pair(noisy: Image, clean: Image, spec: ResizeSpec) -> tuple[Image, Image]:
    """The identical spec applied to both branches."""
    if noisy.shape != clean.shape:
        raise ValueError("branch dimension mismatch")
    return resize(noisy, spec), resize(clean, spec)
