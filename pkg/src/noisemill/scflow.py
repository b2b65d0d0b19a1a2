"""Forward-only Swin-Conv UNet dataflow with deterministically seeded weights.

The SC block is: 1x1 conv, even channel split, swin-transformer half plus
residual-conv half, concat, 1x1 conv, residual add.  The UNet trunk has four
scales (64/128/256/512 channels), four SC blocks per scale group, 2x2 strided
convolutions down, 2x2 transposed convolutions up, and additive skips.  No
training, no autodiff: this module exists to verify shapes, the
split/concat/residual contract, attention normalization, and parameter count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special as _spec

from .imgcore import Image, RngStream

__all__ = [
    "SCUNetConfig",
    "build_weights",
    "parameter_count",
    "conv2d",
    "tconv2d",
    "rconv_forward",
    "swint_forward",
    "sc_block_forward",
    "scunet_forward",
]


@dataclass(frozen=True)
class SCUNetConfig:
    in_channels: int = 3
    scale_channels: tuple[int, int, int, int] = (64, 128, 256, 512)
    blocks_per_scale: int = 4
    window_size: int = 8
    head_dim: int = 32
    mlp_ratio: float = 4.0
    weight_seed: int = 0

    def heads_for(self, swin_dim: int) -> int:
        return max(1, swin_dim // self.head_dim)


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """Same-padded conv for odd kernels; valid conv for even (2x2 strided)."""
    kh, kw = w.shape[2], w.shape[3]
    if kh % 2 == 1:
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
        if ph or pw:
            x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    if stride > 1:
        win = win[:, :, ::stride, ::stride]
    out = np.einsum("nchwij,ocij->nohw", win, w, optimize=True)
    return out + b[None, :, None, None]


def tconv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """2x2 stride-2 transposed conv; w has shape (in, out, 2, 2)."""
    n, c, h, wd = x.shape
    out = np.einsum("nchw,coij->nohwij", x, w, optimize=True)
    o = out.shape[1]
    y = out.transpose(0, 1, 2, 4, 3, 5).reshape(n, o, 2 * h, 2 * wd)
    return y + b[None, :, None, None]


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               eps: float = 1e-5) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gamma + beta


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + _spec.erf(x / np.sqrt(2.0).astype(x.dtype)))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def window_partition(x: np.ndarray, ws: int) -> np.ndarray:
    """(n, h, w, d) -> (n * h/ws * w/ws, ws*ws, d); bijective with reverse."""
    n, h, w, d = x.shape
    x = x.reshape(n, h // ws, ws, w // ws, ws, d)
    return x.transpose(0, 1, 3, 2, 4, 5).reshape(-1, ws * ws, d)


def window_reverse(wins: np.ndarray, ws: int, n: int, h: int, w: int) -> np.ndarray:
    d = wins.shape[-1]
    x = wins.reshape(n, h // ws, w // ws, ws, ws, d)
    return x.transpose(0, 1, 3, 2, 4, 5).reshape(n, h, w, d)


@lru_cache(maxsize=8)
def relative_position_index(ws: int) -> np.ndarray:
    coords = np.stack(np.meshgrid(np.arange(ws), np.arange(ws), indexing="ij"))
    flat = coords.reshape(2, -1)
    rel = (flat[:, :, None] - flat[:, None, :]).transpose(1, 2, 0) + (ws - 1)
    return (rel[..., 0] * (2 * ws - 1) + rel[..., 1]).astype(np.int64)


@lru_cache(maxsize=64)
def shift_attention_mask(h: int, w: int, ws: int) -> np.ndarray:
    """Per-window additive mask blocking attention across wrap regions."""
    shift = ws // 2
    region = np.zeros((1, h, w, 1), dtype=np.float32)
    cnt = 0
    for hs in (slice(0, -ws), slice(-ws, -shift), slice(-shift, None)):
        for vs in (slice(0, -ws), slice(-ws, -shift), slice(-shift, None)):
            region[:, hs, vs, :] = cnt
            cnt += 1
    windows = window_partition(region, ws).reshape(-1, ws * ws)
    diff = windows[:, None, :] - windows[:, :, None]
    return np.where(diff != 0, np.float32(-100.0), np.float32(0.0))


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------

def rconv_forward(x: np.ndarray, weights: dict, prefix: str = "",
                  relu: bool = True) -> np.ndarray:
    """Conv3x3 -> ReLU -> Conv3x3, plus input; no normalization.

    The relu flag is a test hook for checking linearity of the residual branch.
    """
    t = conv2d(x, weights[prefix + "conv1.weight"], weights[prefix + "conv1.bias"])
    if relu:
        t = np.maximum(t, 0.0)
    t = conv2d(t, weights[prefix + "conv2.weight"], weights[prefix + "conv2.bias"])
    return t + x


def swint_forward(x: np.ndarray, weights: dict, shifted: bool,
                  window_size: int = 8, heads: int | None = None,
                  prefix: str = "", use_rel_bias: bool = True,
                  collect_attn: list | None = None) -> np.ndarray:
    """Swin transformer block: LN, (shifted) window attention, residual,
    LN, 2-layer GELU MLP, residual.  x has shape (n, d, h, w)."""
    n, d, h, w = x.shape
    heads = heads or max(1, d // 32)
    ws = window_size
    pad_h, pad_w = (-h) % ws, (-w) % ws
    if pad_h or pad_w:
        x = np.pad(x, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="reflect")
    hp, wp = x.shape[2], x.shape[3]

    t = x.transpose(0, 2, 3, 1)                      # (n, h, w, d)
    shortcut = t
    t = layer_norm(t, weights[prefix + "ln1.gamma"], weights[prefix + "ln1.beta"])
    shift = ws // 2 if shifted else 0
    if shift:
        t = np.roll(t, (-shift, -shift), axis=(1, 2))
    wins = window_partition(t, ws)                   # (B, L, d)
    B, L, _ = wins.shape

    qkv = wins @ weights[prefix + "qkv.weight"].T + weights[prefix + "qkv.bias"]
    qkv = qkv.reshape(B, L, 3, heads, d // heads).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]                 # (B, heads, L, dh)
    att = (q @ k.transpose(0, 1, 3, 2)) / np.sqrt(d // heads).astype(x.dtype)
    if use_rel_bias:
        idx = relative_position_index(ws)
        bias = weights[prefix + "rel_bias"][idx]     # (L, L, heads)
        att = att + bias.transpose(2, 0, 1)[None]
    if shift:
        mask = shift_attention_mask(hp, wp, ws)      # (nW, L, L)
        n_win = mask.shape[0]
        att = att.reshape(B // n_win, n_win, heads, L, L) + mask[None, :, None]
        att = att.reshape(B, heads, L, L)
    att = softmax(att, axis=-1)
    if collect_attn is not None:
        collect_attn.append(att)
    out = (att @ v).transpose(0, 2, 1, 3).reshape(B, L, d)
    out = out @ weights[prefix + "proj.weight"].T + weights[prefix + "proj.bias"]

    out = window_reverse(out, ws, n, hp, wp)
    if shift:
        out = np.roll(out, (shift, shift), axis=(1, 2))
    t = shortcut + out
    u = layer_norm(t, weights[prefix + "ln2.gamma"], weights[prefix + "ln2.beta"])
    u = gelu(u @ weights[prefix + "mlp1.weight"].T + weights[prefix + "mlp1.bias"])
    u = u @ weights[prefix + "mlp2.weight"].T + weights[prefix + "mlp2.bias"]
    t = t + u

    t = t.transpose(0, 3, 1, 2)
    if pad_h or pad_w:
        t = t[:, :, :h, :w]
    return t.astype(x.dtype)


def sc_block_forward(x: np.ndarray, weights: dict, shifted: bool = False,
                     window_size: int = 8, heads: int | None = None,
                     prefix: str = "", collect_attn: list | None = None,
                     use_rel_bias: bool = True) -> np.ndarray:
    """1x1 conv -> even split -> (SwinT, RConv) -> concat -> 1x1 conv -> + x."""
    if x.shape[1] % 2:
        raise ValueError("sc block needs an even channel count")
    t = conv2d(x, weights[prefix + "conv_in.weight"], weights[prefix + "conv_in.bias"])
    half = t.shape[1] // 2
    x1, x2 = t[:, :half], t[:, half:]
    y1 = swint_forward(x1, weights, shifted, window_size=window_size,
                       heads=heads or max(1, half // 32),
                       prefix=prefix + "swin.", use_rel_bias=use_rel_bias,
                       collect_attn=collect_attn)
    y2 = rconv_forward(x2, weights, prefix=prefix + "rconv.")
    t = np.concatenate([y1, y2], axis=1)
    t = conv2d(t, weights[prefix + "conv_out.weight"], weights[prefix + "conv_out.bias"])
    return t + x


# ---------------------------------------------------------------------------
# weight construction
# ---------------------------------------------------------------------------

def _registry(cfg: SCUNetConfig) -> list[tuple[str, tuple, str]]:
    """Ordered (name, shape, init) list defining the model structure."""
    ch = cfg.scale_channels
    ws = cfg.window_size
    entries: list[tuple[str, tuple, str]] = []

    def add(name, shape, init):
        entries.append((name, tuple(shape), init))

    def sc_block(prefix, c):
        d = c // 2
        heads = cfg.heads_for(d)
        hidden = int(d * cfg.mlp_ratio)
        add(prefix + "conv_in.weight", (c, c, 1, 1), "kaiming")
        add(prefix + "conv_in.bias", (c,), "zeros")
        add(prefix + "swin.ln1.gamma", (d,), "ones")
        add(prefix + "swin.ln1.beta", (d,), "zeros")
        add(prefix + "swin.qkv.weight", (3 * d, d), "trunc_normal")
        add(prefix + "swin.qkv.bias", (3 * d,), "zeros")
        add(prefix + "swin.rel_bias", ((2 * ws - 1) ** 2, heads), "trunc_normal")
        add(prefix + "swin.proj.weight", (d, d), "trunc_normal")
        add(prefix + "swin.proj.bias", (d,), "zeros")
        add(prefix + "swin.ln2.gamma", (d,), "ones")
        add(prefix + "swin.ln2.beta", (d,), "zeros")
        add(prefix + "swin.mlp1.weight", (hidden, d), "trunc_normal")
        add(prefix + "swin.mlp1.bias", (hidden,), "zeros")
        add(prefix + "swin.mlp2.weight", (d, hidden), "trunc_normal")
        add(prefix + "swin.mlp2.bias", (d,), "zeros")
        add(prefix + "rconv.conv1.weight", (d, d, 3, 3), "kaiming")
        add(prefix + "rconv.conv1.bias", (d,), "zeros")
        add(prefix + "rconv.conv2.weight", (d, d, 3, 3), "kaiming")
        add(prefix + "rconv.conv2.bias", (d,), "zeros")
        add(prefix + "conv_out.weight", (c, c, 1, 1), "kaiming")
        add(prefix + "conv_out.bias", (c,), "zeros")

    add("head.weight", (ch[0], cfg.in_channels, 3, 3), "kaiming")
    add("head.bias", (ch[0],), "zeros")
    for s in range(3):
        for i in range(cfg.blocks_per_scale):
            sc_block(f"down{s}.block{i}.", ch[s])
        add(f"down{s}.sconv.weight", (ch[s + 1], ch[s], 2, 2), "kaiming")
        add(f"down{s}.sconv.bias", (ch[s + 1],), "zeros")
    for i in range(cfg.blocks_per_scale):
        sc_block(f"mid.block{i}.", ch[3])
    for s in reversed(range(3)):
        add(f"up{s}.tconv.weight", (ch[s + 1], ch[s], 2, 2), "kaiming")
        add(f"up{s}.tconv.bias", (ch[s],), "zeros")
        for i in range(cfg.blocks_per_scale):
            sc_block(f"up{s}.block{i}.", ch[s])
    add("tail.weight", (cfg.in_channels, ch[0], 3, 3), "kaiming")
    add("tail.bias", (cfg.in_channels,), "zeros")
    return entries


def parameter_count(cfg: SCUNetConfig) -> int:
    """Exact scalar parameter count of the constructed model."""
    return sum(int(np.prod(shape)) for _, shape, _ in _registry(cfg))


def _trunc_normal(gen: np.random.Generator, shape, sigma=0.02) -> np.ndarray:
    # inverse-CDF sampling restricted to +-2 sigma
    lo, hi = _spec.ndtr(-2.0), _spec.ndtr(2.0)
    u = gen.random(shape) * (hi - lo) + lo
    return (_spec.ndtri(u) * sigma).astype(np.float32)


def build_weights(cfg: SCUNetConfig) -> dict:
    """Materialize all weights from cfg.weight_seed in registry order."""
    gen = RngStream(cfg.weight_seed, (("scunet_weights", 0),)).generator
    weights = {}
    for name, shape, init in _registry(cfg):
        if init == "zeros":
            weights[name] = np.zeros(shape, dtype=np.float32)
        elif init == "ones":
            weights[name] = np.ones(shape, dtype=np.float32)
        elif init == "trunc_normal":
            weights[name] = _trunc_normal(gen, shape)
        elif init == "kaiming":
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else int(shape[0])
            bound = float(np.sqrt(6.0 / fan_in))
            weights[name] = gen.uniform(-bound, bound, shape).astype(np.float32)
        else:
            raise ValueError(init)
    return weights


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------

def _group(x, weights, prefix, cfg, blocks):
    heads = cfg.heads_for(x.shape[1] // 2)
    for i in range(blocks):
        x = sc_block_forward(x, weights, shifted=(i % 2 == 1),
                             window_size=cfg.window_size, heads=heads,
                             prefix=f"{prefix}.block{i}.")
    return x


def scunet_forward(img: Image, cfg: SCUNetConfig | None = None,
                   weights: dict | None = None) -> Image:
    """Full UNet forward; output dims equal input dims for any input size."""
    cfg = cfg or SCUNetConfig()
    if img.channels != cfg.in_channels:
        raise ValueError(f"expected {cfg.in_channels}-channel input")
    if weights is None:
        weights = build_weights(cfg)

    x = img.data[None].astype(np.float32)
    h, w = x.shape[2], x.shape[3]
    unit = 8 * cfg.window_size
    pad_h, pad_w = (-h) % unit, (-w) % unit
    if pad_h or pad_w:
        x = np.pad(x, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="reflect")

    b = cfg.blocks_per_scale
    x1 = conv2d(x, weights["head.weight"], weights["head.bias"])
    t = _group(x1, weights, "down0", cfg, b)
    x2 = conv2d(t, weights["down0.sconv.weight"], weights["down0.sconv.bias"], stride=2)
    t = _group(x2, weights, "down1", cfg, b)
    x3 = conv2d(t, weights["down1.sconv.weight"], weights["down1.sconv.bias"], stride=2)
    t = _group(x3, weights, "down2", cfg, b)
    x4 = conv2d(t, weights["down2.sconv.weight"], weights["down2.sconv.bias"], stride=2)
    t = _group(x4, weights, "mid", cfg, b)
    t = tconv2d(t + x4, weights["up2.tconv.weight"], weights["up2.tconv.bias"])
    t = _group(t, weights, "up2", cfg, b)
    t = tconv2d(t + x3, weights["up1.tconv.weight"], weights["up1.tconv.bias"])
    t = _group(t, weights, "up1", cfg, b)
    t = tconv2d(t + x2, weights["up0.tconv.weight"], weights["up0.tconv.bias"])
    t = _group(t, weights, "up0", cfg, b)
    out = conv2d(t + x1, weights["tail.weight"], weights["tail.bias"])

    out = out[0, :, :h, :w]
    return Image(out.astype(np.float32))
