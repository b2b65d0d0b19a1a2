"""Deterministic synthetic photographs for tests, demos, and corpora.

Band-limited color fields (smooth gradients, filtered texture, soft highlight
blobs) that behave like natural content without shipping binary assets.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage as _ndi

from .imgcore import Image, RngStream


def synth_natural(seed: int, height: int = 256, width: int = 256,
                  texture: float = 0.025, highlight: bool = True) -> Image:
    """Smooth multi-frequency color image in [0,1]; fully seed-determined."""
    rng = RngStream(seed, (("synth", 0),))
    gen = rng.generator
    yy, xx = np.mgrid[0:height, 0:width]
    yy = yy / max(height, 1)
    xx = xx / max(width, 1)

    chans = []
    for c in range(3):
        f1, f2 = gen.uniform(2.0, 6.0), gen.uniform(1.5, 4.5)
        p1, p2 = gen.uniform(0, 2 * np.pi, 2)
        amp = gen.uniform(0.22, 0.33)
        base = 0.5 + amp * np.sin(f1 * xx + f2 * yy + p1) \
            + 0.12 * np.cos(f2 * 1.7 * xx - f1 * 0.8 * yy + p2)
        chans.append(base)
    img = np.stack(chans)

    if texture > 0:
        tex = gen.standard_normal((3, height, width))
        tex = _ndi.gaussian_filter(tex, (0, 3.0, 3.0))
        img = img + texture / max(tex.std(), 1e-9) * tex

    if highlight:
        cy, cx = gen.uniform(0.2, 0.8, 2)
        r2 = (xx - cx) ** 2 + (yy - cy) ** 2
        img = img + 0.55 * np.exp(-r2 / 0.02)[None]

    return Image(np.clip(img, 0.0, 1.0).astype(np.float32))


def synth_textured(seed: int, height: int = 256, width: int = 256) -> Image:
    """Higher-frequency variant with more texture energy, for codec tests."""
    img = synth_natural(seed, height, width, texture=0.14, highlight=False)
    rng = RngStream(seed, (("synth_detail", 0),))
    gen = rng.generator
    yy, xx = np.mgrid[0:height, 0:width]
    stripes = 0.08 * np.sin(2 * np.pi * (xx / gen.uniform(9, 17)
                                         + yy / gen.uniform(23, 41)))
    out = img.data.astype(np.float64) + stripes[None]
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


def corpus(count: int, seed: int = 1000, height: int = 256,
           width: int = 256) -> list[Image]:
    return [synth_natural(seed + i, height, width) for i in range(count)]
