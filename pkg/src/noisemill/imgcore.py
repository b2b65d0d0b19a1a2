"""Core image type, color primitives, 8-bit PNG I/O, and hierarchical RNG streams.

Images are channel-planar float32 arrays of shape (channels, height, width)
with nominal value range [0, 1].  Every stochastic routine in the package
draws from an explicit :class:`RngStream`; there is no ambient global
randomness anywhere.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as _PILImage

__all__ = [
    "Image",
    "RngStream",
    "clip01",
    "rgb_to_gray",
    "load_png",
    "save_png",
]

# BT.601 luma weights, shared with the JPEG simulator so the whole
# repository uses a single luma convention.
GRAY_WEIGHTS = (0.299, 0.587, 0.114)


class ImageError(ValueError):
    pass


@dataclass(frozen=True)
class Image:
    """Planar floating-point image: data has shape (channels, height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ImageError(f"image data must be 3-d (c,h,w), got shape {arr.shape}")
        c, h, w = arr.shape
        if c not in (1, 3):
            raise ImageError(f"channels must be 1 or 3, got {c}")
        if h < 1 or w < 1:
            raise ImageError(f"degenerate image dims {h}x{w}")
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise ImageError("image contains non-finite values")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def clip01(img: Image) -> Image:
    """Clamp all values into [0, 1]. Idempotent."""
    return Image(np.clip(img.data, 0.0, 1.0))


def rgb_to_gray(img: Image) -> Image:
    """BT.601 luma of a 3-channel image, returned as a 1-channel image."""
    if img.channels != 3:
        raise ImageError("rgb_to_gray requires a 3-channel image")
    r, g, b = img.data.astype(np.float64)
    wr, wg, wb = GRAY_WEIGHTS
    y = wr * r + wg * g + wb * b
    return Image(y[None].astype(np.float32))


def quantize8(values: np.ndarray) -> np.ndarray:
    """Map [0,1] floats to 8-bit codes with round-half-up after clamping."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def load_png(path) -> Image:
    """Load an 8-bit grayscale or RGB PNG; code k maps to k/255."""
    try:
        with _PILImage.open(path) as pil:
            pil.load()
            if pil.format != "PNG":
                raise ImageError(f"{path}: not a PNG file (format={pil.format})")
            mode = pil.mode
            if mode == "L":
                arr = np.asarray(pil, dtype=np.uint8)[None]
            elif mode == "RGB":
                arr = np.asarray(pil, dtype=np.uint8).transpose(2, 0, 1)
            elif mode in ("P", "RGBA", "LA"):
                # palettized / alpha PNGs are still 8-bit per sample
                conv = pil.convert("RGB")
                arr = np.asarray(conv, dtype=np.uint8).transpose(2, 0, 1)
            else:
                raise ImageError(f"{path}: unsupported PNG mode {mode} (8-bit only)")
    except (OSError, SyntaxError) as exc:
        raise ImageError(f"cannot read PNG {path}: {exc}") from exc
    return Image((arr.astype(np.float32) / 255.0))


def save_png(img: Image, path) -> None:
    """Write as 8-bit PNG; v maps to round-half-up(v*255) after clipping."""
    codes = quantize8(img.data)
    if img.channels == 1:
        pil = _PILImage.fromarray(codes[0], mode="L")
    else:
        pil = _PILImage.fromarray(codes.transpose(1, 2, 0), mode="RGB")
    pil.save(path, format="PNG")


# ---------------------------------------------------------------------------
# Deterministic hierarchical random streams
# ---------------------------------------------------------------------------

def _derive_key(master_seed: int, path: tuple[tuple[str, int], ...]) -> np.ndarray:
    h = hashlib.sha256()
    h.update(int(master_seed).to_bytes(8, "big", signed=False))
    for label, index in path:
        lb = label.encode("utf-8")
        h.update(len(lb).to_bytes(2, "big"))
        h.update(lb)
        h.update(int(index).to_bytes(8, "big", signed=True))
    return np.frombuffer(h.digest()[:16], dtype=np.uint64).copy()


@dataclass
class RngStream:
    """Counter-based random stream addressed by (master_seed, path).

    The generator state is keyed by a SHA-256 hash of the seed and the
    ordered (label, index) path, so identical addresses reproduce identical
    value sequences on every platform, and forking never consumes parent
    state.  A stream is single-owner: parallel work must fork children
    before dispatch instead of sharing one stream.
    """

    master_seed: int
    path: tuple[tuple[str, int], ...] = ()
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def fork(self, label: str, index: int = 0) -> "RngStream":
        """Child stream with the path extended; parent state is untouched."""
        return RngStream(self.master_seed, self.path + ((str(label), int(index)),))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = _derive_key(self.master_seed, self.path)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    # thin draws used throughout the package ------------------------------

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high, size=None):
        """Uniform integers in [low, high] inclusive."""
        return self.generator.integers(low, high, size=size, endpoint=True)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def poisson(self, lam):
        return self.generator.poisson(lam)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice_index(self, probabilities) -> int:
        """Index drawn from a discrete distribution via one uniform draw."""
        p = np.asarray(probabilities, dtype=np.float64)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0):
            raise ValueError("probabilities must be a nonnegative 1-d vector")
        c = np.cumsum(p)
        if not np.isclose(c[-1], 1.0, atol=1e-9):
            raise ValueError("probabilities must sum to 1")
        u = self.generator.uniform(0.0, 1.0)
        return int(np.searchsorted(c, u * c[-1], side="right").clip(0, p.size - 1))
