"""Processed camera-sensor noise: reverse ISP to a Bayer raw image, read/shot
noise injection, forward ISP back to RGB, and the reverse-forward tone
remapping applied to the clean branch to avoid color shift.

Stage order (forward): demosaic, white balance, exposure, camera-to-XYZ(D50),
XYZ(D50)-to-linear-sRGB, tone mapping, gamma last.  The reverse pipeline runs
the exact mirror.  Gains are applied through an invertible soft roll-off above
0.9 so highlights never clip in the raw domain and the zero-noise round trip
is dominated purely by demosaicing error.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as _ndi

from .imgcore import Image, RngStream, clip01

__all__ = [
    "ToneCurve",
    "CameraModel",
    "RawImage",
    "SensorNoiseParams",
    "IspContext",
    "BUILTIN_CAMERAS",
    "tone_forward",
    "tone_inverse",
    "reverse_isp",
    "add_sensor_noise",
    "forward_isp",
    "sensor_noise_stage",
    "sample_sensor_params",
    "load_tone_curve",
]

# Bradford-adapted linear sRGB -> XYZ(D50), the ICC profile connection matrix.
SRGB_TO_XYZ_D50 = np.array([
    [0.4360747, 0.3850649, 0.1430804],
    [0.2225045, 0.7168786, 0.0606169],
    [0.0139322, 0.0971045, 0.7141733],
])
XYZ_D50_TO_SRGB = np.linalg.inv(SRGB_TO_XYZ_D50)

GAIN_KNEE = 0.9       # raw value above which gain application rolls off
GAIN_LOW_KNEE = 0.02  # below this the map compresses toward (never onto) zero


class ToneKind(enum.Enum):
    SMOOTHSTEP = "smoothstep"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class ToneCurve:
    """Monotone brightness curve fixing 0 and 1.

    Smoothstep is f(v) = 3v^2 - 2v^3 with the closed-form inverse
    g(u) = 1/2 - sin(asin(1 - 2u) / 3).  Tabulated curves interpolate a
    monotone sample table on [0, 1].
    """

    kind: ToneKind = ToneKind.SMOOTHSTEP
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind is ToneKind.TABULATED:
            t = np.asarray(self.table, dtype=np.float64)
            if t.ndim != 1 or t.size < 256:
                raise ValueError("tone table needs >= 256 samples")
            if not (np.all(np.diff(t) > 0) and t[0] == 0.0 and t[-1] == 1.0):
                raise ValueError("tone table must be strictly monotone from 0 to 1")
            t = np.ascontiguousarray(t)
            t.flags.writeable = False
            object.__setattr__(self, "table", t)
        elif self.table is not None:
            raise ValueError("smoothstep curve takes no table")


def tone_forward(values: np.ndarray, curve: ToneCurve) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if curve.kind is ToneKind.SMOOTHSTEP:
        return 3.0 * v**2 - 2.0 * v**3
    grid = np.linspace(0.0, 1.0, curve.table.size)
    return np.interp(v, grid, curve.table)


def tone_inverse(values: np.ndarray, curve: ToneCurve) -> np.ndarray:
    u = np.asarray(values, dtype=np.float64)
    if curve.kind is ToneKind.SMOOTHSTEP:
        return 0.5 - np.sin(np.arcsin(np.clip(1.0 - 2.0 * u, -1.0, 1.0)) / 3.0)
    grid = np.linspace(0.0, 1.0, curve.table.size)
    return np.interp(u, curve.table, grid)


def load_tone_curve(path) -> ToneCurve:
    """Plain-text curve file: first line sample count, then one sample per line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty tone curve file")
    n = int(lines[0])
    samples = np.array([float(x) for x in lines[1:]], dtype=np.float64)
    if samples.size != n:
        raise ValueError(f"{path}: header says {n} samples, found {samples.size}")
    return ToneCurve(ToneKind.TABULATED, samples)


def srgb_decode(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0:
        return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)
    out = v / 12.92
    m = v > 0.04045
    out[m] = ((v[m] + 0.055) / 1.055) ** 2.4
    return out


def srgb_encode(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0:
        return np.where(v <= 0.0031308, v * 12.92,
                        1.055 * np.maximum(v, 0.0) ** (1.0 / 2.4) - 0.055)
    out = v * 12.92
    m = v > 0.0031308
    out[m] = 1.055 * v[m] ** (1.0 / 2.4) - 0.055
    return out


@dataclass(frozen=True)
class CameraModel:
    """Per-camera ISP parameterization: color matrix, gain ranges, tone curve."""

    name: str
    ccm: np.ndarray                       # camera RGB -> XYZ(D50)
    wb_red_range: tuple[float, float]
    wb_blue_range: tuple[float, float]
    tone_curve: ToneCurve = field(default_factory=ToneCurve)
    exposure_log2_range: tuple[float, float] = (-0.3, 0.3)

    def __post_init__(self):
        ccm = np.asarray(self.ccm, dtype=np.float64)
        if ccm.shape != (3, 3):
            raise ValueError("ccm must be 3x3")
        if np.linalg.cond(ccm) >= 1e4:
            raise ValueError("ccm is ill-conditioned")
        for lo, hi in (self.wb_red_range, self.wb_blue_range):
            if not (1.0 <= lo <= hi <= 4.0):
                raise ValueError("wb gain ranges must lie within [1, 4]")
        ccm = np.ascontiguousarray(ccm)
        ccm.flags.writeable = False
        object.__setattr__(self, "ccm", ccm)


def _mix_ccm(mix: np.ndarray) -> np.ndarray:
    return SRGB_TO_XYZ_D50 @ np.asarray(mix, dtype=np.float64)


BUILTIN_CAMERAS = (
    CameraModel(
        name="neutral",
        ccm=SRGB_TO_XYZ_D50,
        wb_red_range=(1.4, 2.4), wb_blue_range=(1.2, 2.0)),
    CameraModel(
        name="warm",
        ccm=_mix_ccm([[0.88, 0.08, 0.04], [0.05, 0.90, 0.05], [0.03, 0.09, 0.88]]),
        wb_red_range=(1.7, 2.6), wb_blue_range=(1.1, 1.8)),
    CameraModel(
        name="cool",
        ccm=_mix_ccm([[0.90, 0.07, 0.03], [0.06, 0.88, 0.06], [0.02, 0.06, 0.92]]),
        wb_red_range=(1.3, 2.1), wb_blue_range=(1.4, 2.2)),
)


def builtin_camera(name: str) -> CameraModel:
    for cam in BUILTIN_CAMERAS:
        if cam.name == name:
            return cam
    raise KeyError(f"unknown camera model {name!r}")


@dataclass(frozen=True)
class RawImage:
    """Single-plane RGGB Bayer mosaic in the linear domain, values in [0,1]."""

    data: np.ndarray
    pattern: str = "RGGB"

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError("raw data must be 2-d")
        h, w = arr.shape
        if h % 2 or w % 2:
            raise ValueError("raw dims must be even")
        if not np.all(np.isfinite(arr)):
            raise ValueError("raw contains non-finite values")
        if self.pattern != "RGGB":
            raise ValueError("only the RGGB pattern is supported")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SensorNoiseParams:
    lambda_shot: float   # variance slope vs signal
    lambda_read: float   # variance floor

    def __post_init__(self):
        if self.lambda_shot <= 0 or self.lambda_read <= 0:
            raise ValueError("noise params must be positive")


def sample_sensor_params(rng: RngStream) -> SensorNoiseParams:
    """Log-log linear read/shot sampling from the unprocessing noise model:
    log10(shot) ~ U(-4, -1.9); ln(read) = 2.18 ln(shot) + 1.20 + N(0, 0.26)."""
    log_shot = rng.uniform(np.log(1e-4), np.log(10.0 ** -1.9))
    shot = float(np.exp(log_shot))
    log_read = 2.18 * log_shot + 1.20 + rng.normal(0.0, 0.26)
    return SensorNoiseParams(lambda_shot=shot, lambda_read=float(np.exp(log_read)))


@dataclass(frozen=True)
class IspContext:
    """Every parameter sampled by reverse_isp, so forward_isp inverts exactly."""

    camera: str
    wb_red: float
    wb_blue: float
    exposure_gain: float


def _soft_gain_apply(v: np.ndarray, gain: float) -> np.ndarray:
    """v*gain mapped bijectively into (0, 1): exponential roll-off above the
    high knee and below the low knee.  Highlights never clip and out-of-gamut
    negatives survive the raw domain, so the forward pass can invert exactly."""
    y = v * gain
    hi, lo = GAIN_KNEE, GAIN_LOW_KNEE
    m = y > hi
    if np.any(m):
        y[m] = 1.0 - (1.0 - hi) * np.exp(-(y[m] - hi) / (1.0 - hi))
    m = y < lo
    if np.any(m):
        y[m] = lo * np.exp((y[m] - lo) / lo)
    return y


def _soft_gain_invert(r: np.ndarray, gain: float) -> np.ndarray:
    # the caps only engage for noise-saturated raw samples; reverse_isp itself
    # never emits values this close to 0 or 1
    y = np.clip(r, 1e-30, 1.0 - 1e-6)
    hi, lo = GAIN_KNEE, GAIN_LOW_KNEE
    m = y > hi
    if np.any(m):
        y[m] = hi - (1.0 - hi) * np.log((1.0 - y[m]) / (1.0 - hi))
    m = y < lo
    if np.any(m):
        y[m] = lo * (1.0 + np.log(y[m] / lo))
    return y / gain


def mosaic_rggb(rgb: np.ndarray) -> np.ndarray:
    """(3, h, w) linear camera RGB -> (h, w) RGGB mosaic."""
    _, h, w = rgb.shape
    raw = np.empty((h, w), dtype=np.float64)
    raw[0::2, 0::2] = rgb[0, 0::2, 0::2]
    raw[0::2, 1::2] = rgb[1, 0::2, 1::2]
    raw[1::2, 0::2] = rgb[1, 1::2, 0::2]
    raw[1::2, 1::2] = rgb[2, 1::2, 1::2]
    return raw


_KERNEL_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64) / 4.0
_KERNEL_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=np.float64) / 4.0


def demosaic_rggb(raw: np.ndarray) -> np.ndarray:
    """Bilinear demosaic per Bayer phase.

    The mosaic is reflect-padded by two samples (odd reflection keeps the CFA
    phase, since +k and -k share parity) so border pixels interpolate from
    symmetric support.  Exact on constant mosaics; this is also the step that
    correlates noise across channels in the processed output.
    """
    h, w = raw.shape
    p = np.pad(raw.astype(np.float64), 2, mode="reflect")
    ph, pw = p.shape
    out = np.empty((3, h, w), dtype=np.float64)
    masks = np.zeros((3, ph, pw), dtype=np.float64)
    masks[0, 0::2, 0::2] = 1.0
    masks[1, 0::2, 1::2] = 1.0
    masks[1, 1::2, 0::2] = 1.0
    masks[2, 1::2, 1::2] = 1.0
    for c, kern in ((0, _KERNEL_RB), (1, _KERNEL_G), (2, _KERNEL_RB)):
        num = _ndi.convolve(p * masks[c], kern, mode="constant")
        den = _ndi.convolve(masks[c], kern, mode="constant")
        out[c] = (num / den)[2:-2, 2:-2]
    return out


def _sample_context(cam: CameraModel, rng: RngStream) -> IspContext:
    wb_red = float(rng.uniform(*cam.wb_red_range))
    wb_blue = float(rng.uniform(*cam.wb_blue_range))
    exposure = float(2.0 ** rng.uniform(*cam.exposure_log2_range))
    return IspContext(camera=cam.name, wb_red=wb_red, wb_blue=wb_blue,
                      exposure_gain=exposure)


def reverse_isp(img: Image, cam: CameraModel, rng: RngStream,
                ctx: IspContext | None = None,
                trace: list | None = None) -> tuple[RawImage, IspContext]:
    """sRGB image -> Bayer raw, sampling gains unless a context is supplied."""
    if img.channels != 3:
        raise ValueError("reverse_isp requires a 3-channel image")
    if img.height % 2 or img.width % 2:
        raise ValueError("reverse_isp requires even dims")
    if ctx is None:
        ctx = _sample_context(cam, rng)
    if ctx.camera != cam.name:
        raise ValueError("context/camera mismatch")

    def log(stage):
        if trace is not None:
            trace.append(stage)

    x = srgb_decode(img.data.astype(np.float64))
    log("gamma_decode")
    x = tone_inverse(x, cam.tone_curve)
    log("tone_inverse")
    x = np.einsum("ij,jhw->ihw", SRGB_TO_XYZ_D50, x)
    log("srgb_to_xyz")
    inv_ccm = np.linalg.inv(cam.ccm)
    x = np.einsum("ij,jhw->ihw", inv_ccm, x)
    log("xyz_to_camera")
    x = _soft_gain_apply(x, 1.0 / ctx.exposure_gain)
    log("inverse_exposure")
    wb = (1.0 / ctx.wb_red, 1.0, 1.0 / ctx.wb_blue)
    x = np.stack([_soft_gain_apply(x[c], wb[c]) for c in range(3)])
    log("inverse_white_balance")
    raw = mosaic_rggb(x)
    log("mosaic")
    return RawImage(np.clip(raw, 0.0, 1.0).astype(np.float32)), ctx


def add_sensor_noise(raw: RawImage, params: SensorNoiseParams,
                     rng: RngStream) -> RawImage:
    """Heteroscedastic Gaussian shot+read noise: var = read + shot * signal."""
    v = raw.data.astype(np.float64)
    std = np.sqrt(params.lambda_read + params.lambda_shot * v)
    noisy = v + rng.standard_normal(v.shape) * std
    return RawImage(np.clip(noisy, 0.0, 1.0).astype(np.float32))


def forward_isp(raw: RawImage, ctx: IspContext, cam: CameraModel,
                trace: list | None = None) -> Image:
    """Bayer raw -> sRGB image, inverting reverse_isp's sampled parameters."""
    if ctx.camera != cam.name:
        raise ValueError("context/camera mismatch")

    def log(stage):
        if trace is not None:
            trace.append(stage)

    x = demosaic_rggb(raw.data.astype(np.float64))
    log("demosaic")
    wb = (1.0 / ctx.wb_red, 1.0, 1.0 / ctx.wb_blue)
    x = np.stack([_soft_gain_invert(x[c], wb[c]) for c in range(3)])
    log("white_balance")
    x = _soft_gain_invert(x, 1.0 / ctx.exposure_gain)
    log("exposure")
    x = np.einsum("ij,jhw->ihw", cam.ccm, x)
    log("camera_to_xyz")
    x = np.einsum("ij,jhw->ihw", XYZ_D50_TO_SRGB, x)
    x = np.clip(x, 0.0, 1.0)
    log("xyz_to_linear_srgb")
    x = tone_forward(x, cam.tone_curve)
    log("tone_mapping")
    x = srgb_encode(x)
    log("gamma_correction")
    return clip01(Image(x.astype(np.float32)))


def tone_remap_roundtrip(img: Image, cam: CameraModel) -> Image:
    """Clean-branch companion: gamma-decode, tone inverse, tone forward,
    gamma-encode; geometry and color matrices untouched."""
    x = srgb_decode(img.data.astype(np.float64))
    x = tone_inverse(x, cam.tone_curve)
    x = tone_forward(x, cam.tone_curve)
    x = srgb_encode(x)
    return clip01(Image(x.astype(np.float32)))


def sensor_noise_stage(noisy_branch: Image, clean_branch: Image,
                       cam: CameraModel, rng: RngStream,
                       ctx: IspContext | None = None,
                       params: SensorNoiseParams | None = None,
                       ) -> tuple[Image, Image]:
    """Full reverse -> noise -> forward on the noisy branch; reverse-forward
    tone remapping on the clean branch.  Odd dims are reflect-padded by one
    row/column for the Bayer stage and cropped back."""
    if noisy_branch.shape != clean_branch.shape:
        raise ValueError("branch dimension mismatch")
    h, w = noisy_branch.height, noisy_branch.width
    pad_h, pad_w = h % 2, w % 2
    work = noisy_branch
    if pad_h or pad_w:
        padded = np.pad(noisy_branch.data, ((0, 0), (0, pad_h), (0, pad_w)),
                        mode="reflect")
        work = Image(padded)
    if params is None:
        params = sample_sensor_params(rng.fork("sensor_params"))
    raw, ctx = reverse_isp(work, cam, rng.fork("isp_gains"), ctx=ctx)
    raw = add_sensor_noise(raw, params, rng.fork("sensor_noise"))
    out = forward_isp(raw, ctx, cam)
    if pad_h or pad_w:
        out = Image(out.data[:, :h, :w])
    return out, tone_remap_roundtrip(clean_branch, cam)
