import numpy as np
import pytest

from noisemill import testimages
from noisemill.imgcore import Image, RngStream


@pytest.fixture(scope="session")
def natural_corpus():
    """Ten band-limited natural-like images used by the oracle suites."""
    return testimages.corpus(10, seed=3000)


@pytest.fixture(scope="session")
def textured_corpus():
    """Three higher-frequency images for the codec comparisons."""
    return [testimages.synth_textured(2000 + i, 256, 256) for i in range(3)]


@pytest.fixture(scope="session")
def hq_image():
    """One 544x544 high-quality source for pipeline runs."""
    return testimages.synth_natural(7, 544, 544)


@pytest.fixture()
def rng():
    return RngStream(1234)


def constant_image(value: float, h: int = 64, w: int = 64, channels: int = 3) -> Image:
    return Image(np.full((channels, h, w), value, dtype=np.float32))
