"""Additive and multiplicative noise families: generalized 3-channel Gaussian
with a full covariance model, signal-dependent Poisson, and speckle.

Every generator clips its output into [0, 1] and takes an explicit RngStream.
The Poisson and speckle generators separate the *signal* image (which shapes
the noise) from the *target* image (which receives it), because in a shuffled
degradation chain the noise statistics must follow the clean branch.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .imgcore import Image, RngStream, clip01, rgb_to_gray

__all__ = [
    "GaussianMode",
    "GaussianSpec",
    "PoissonSpec",
    "sample_gaussian_spec",
    "sample_speckle_spec",
    "sample_poisson_spec",
    "add_gaussian",
    "add_poisson",
    "add_speckle",
]

SIGMA_LEVELS_255 = (2, 50)   # inclusive integer range of sigma*255
MODE_PROBS = (0.4, 0.4, 0.2)  # color-white, gray, general correlated


class GaussianMode(enum.Enum):
    COLOR_WHITE = "color_white"
    GRAY = "gray"
    GENERAL = "general"


@dataclass(frozen=True)
class GaussianSpec:
    """Zero-mean 3-channel Gaussian noise with per-channel RMS level sigma.

    covariance is a 3x3 PSD matrix in variance units of [0,1]-scaled
    intensity; trace(covariance) == 3*sigma**2.
    """

    mode: GaussianMode
    sigma: float
    covariance: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=np.float64)
        if cov.shape != (3, 3):
            raise ValueError("covariance must be 3x3")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        tr = np.trace(cov) / 3.0
        if self.sigma > 0 and abs(tr - self.sigma**2) > 1e-10 * self.sigma**2:
            raise ValueError("trace(covariance)/3 must equal sigma^2")
        if np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ValueError("covariance must be PSD")
        cov = np.ascontiguousarray(cov)
        cov.flags.writeable = False
        object.__setattr__(self, "covariance", cov)

    @staticmethod
    def color_white(sigma: float) -> "GaussianSpec":
        return GaussianSpec(GaussianMode.COLOR_WHITE, sigma, sigma**2 * np.eye(3))

    @staticmethod
    def gray(sigma: float) -> "GaussianSpec":
        return GaussianSpec(GaussianMode.GRAY, sigma, sigma**2 * np.ones((3, 3)))

    @staticmethod
    def general(sigma: float, covariance) -> "GaussianSpec":
        return GaussianSpec(GaussianMode.GENERAL, sigma, covariance)


@dataclass(frozen=True)
class PoissonSpec:
    alpha: float
    gray: bool = False

    def __post_init__(self):
        if not 2.0 <= self.alpha <= 4.0:
            raise ValueError("alpha must lie in [2, 4]")


def _random_rotation(rng: RngStream) -> np.ndarray:
    """Proper rotation from QR-orthogonalizing a Gaussian matrix."""
    m = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(m)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _sample_sigma(rng: RngStream, levels_255=SIGMA_LEVELS_255) -> float:
    lo, hi = levels_255
    return int(rng.integers(lo, hi)) / 255.0


def _general_covariance(rng: RngStream, sigma: float) -> np.ndarray:
    # eigenvalues uniform on the simplex scaled to sum 3, random rotation:
    # spans the PSD family between the white and gray extremes while keeping
    # the per-channel RMS at sigma.
    e = -np.log(rng.uniform(size=3))
    w = 3.0 * e / e.sum()
    q = _random_rotation(rng)
    cov = sigma**2 * (q @ np.diag(w) @ q.T)
    cov = 0.5 * (cov + cov.T)
    # renormalize so the trace invariant holds to the last bit
    cov *= 3.0 * sigma**2 / np.trace(cov)
    return cov


def sample_gaussian_spec(rng: RngStream, mode_probs=MODE_PROBS,
                         levels_255=SIGMA_LEVELS_255) -> GaussianSpec:
    """Mode ~ (0.4 white, 0.4 gray, 0.2 general); sigma*255 uniform on {2..50}."""
    k = rng.choice_index(mode_probs)
    sigma = _sample_sigma(rng, levels_255)
    if k == 0:
        return GaussianSpec.color_white(sigma)
    if k == 1:
        return GaussianSpec.gray(sigma)
    return GaussianSpec.general(sigma, _general_covariance(rng, sigma))


def sample_speckle_spec(rng: RngStream, gray_prob: float = 0.5,
                        levels_255=SIGMA_LEVELS_255) -> GaussianSpec:
    """Speckle field spec: gray with probability gray_prob, remaining mass
    split between white and general in the Gaussian sampler's 0.4:0.2 ratio."""
    rest = 1.0 - gray_prob
    return sample_gaussian_spec(
        rng, mode_probs=(rest * 2.0 / 3.0, gray_prob, rest / 3.0),
        levels_255=levels_255)


def sample_poisson_spec(rng: RngStream, alpha_range=(2.0, 4.0),
                        gray_prob: float = 0.5) -> PoissonSpec:
    alpha = float(rng.uniform(alpha_range[0], alpha_range[1]))
    gray = bool(rng.uniform() < gray_prob)
    return PoissonSpec(alpha=alpha, gray=gray)


def _gaussian_field(shape_hw: tuple[int, int], spec: GaussianSpec,
                    rng: RngStream) -> np.ndarray:
    """Per-pixel 3-vector Gaussian noise field, shape (3, h, w), float64.

    Gray mode draws one scalar field and replicates it so channel
    differences are preserved (up to final float32 rounding).
    """
    h, w = shape_hw
    if spec.sigma == 0.0:
        return np.zeros((3, h, w))
    if spec.mode is GaussianMode.GRAY:
        g = rng.standard_normal((1, h, w)) * spec.sigma
        return np.broadcast_to(g, (3, h, w))
    if spec.mode is GaussianMode.COLOR_WHITE:
        return rng.standard_normal((3, h, w)) * spec.sigma
    # general: factor the covariance through its eigensystem (PSD-safe)
    lam, vec = np.linalg.eigh(spec.covariance)
    a = vec @ np.diag(np.sqrt(np.maximum(lam, 0.0)))
    z = rng.standard_normal((3, h * w))
    return (a @ z).reshape(3, h, w)


def add_gaussian(img: Image, spec: GaussianSpec, rng: RngStream) -> Image:
    """clip01(img + n), n ~ N(0, spec.covariance) i.i.d. across pixels."""
    if img.channels != 3:
        raise ValueError("add_gaussian requires a 3-channel image")
    n = _gaussian_field((img.height, img.width), spec, rng)
    return clip01(Image((img.data.astype(np.float64) + n).astype(np.float32)))


def _poisson_noise(signal: Image, spec: PoissonSpec, rng: RngStream) -> np.ndarray:
    """n = P(10^a * x) / 10^a - x computed from the signal image."""
    scale = 10.0 ** spec.alpha
    if spec.gray and signal.channels == 3:
        x = rgb_to_gray(signal).data.astype(np.float64)
    else:
        x = signal.data.astype(np.float64)
    rate = np.clip(x, 0.0, 1.0) * scale
    counts = rng.poisson(rate)
    n = counts / scale - np.clip(x, 0.0, 1.0)
    if n.shape[0] == 1 and signal.channels == 3:
        n = np.broadcast_to(n, (3,) + n.shape[1:])
    return n


def add_poisson(signal: Image, target: Image, spec: PoissonSpec,
                rng: RngStream) -> Image:
    """Signal-dependent shot noise shaped by `signal`, added to `target`."""
    if signal.shape != target.shape:
        raise ValueError("signal/target dimension mismatch")
    n = _poisson_noise(signal, spec, rng)
    return clip01(Image((target.data.astype(np.float64) + n).astype(np.float32)))


def add_speckle(signal: Image, target: Image, spec: GaussianSpec,
                rng: RngStream) -> Image:
    """Multiplicative noise: clip01(target + signal * g) with Gaussian g."""
    if signal.shape != target.shape:
        raise ValueError("signal/target dimension mismatch")
    if signal.channels != 3:
        raise ValueError("add_speckle requires 3-channel images")
    g = _gaussian_field((signal.height, signal.width), spec, rng)
    bump = signal.data.astype(np.float64) * g
    return clip01(Image((target.data.astype(np.float64) + bump).astype(np.float32)))
