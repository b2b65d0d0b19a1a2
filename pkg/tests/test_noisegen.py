import numpy as np
import pytest

from noisemill.imgcore import Image, RngStream, clip01
from noisemill.noisegen import (
    GaussianMode, GaussianSpec, PoissonSpec,
    add_gaussian, add_poisson, add_speckle,
    sample_gaussian_spec, sample_poisson_spec, sample_speckle_spec,
)

F32_ULP = 2.0 ** -23  # channel differences are preserved to the last stored bit


def const_image(v, h=64, w=64):
    return Image(np.full((3, h, w), v, dtype=np.float32))


class TestGaussianSpec:
    def test_white_structure(self):
        spec = GaussianSpec.color_white(25 / 255)
        assert np.allclose(spec.covariance, (25 / 255) ** 2 * np.eye(3))

    def test_gray_structure(self):
        spec = GaussianSpec.gray(0.1)
        assert np.allclose(spec.covariance, 0.01 * np.ones((3, 3)))

    def test_trace_invariant_enforced(self):
        with pytest.raises(ValueError):
            GaussianSpec(GaussianMode.GENERAL, 0.1, np.eye(3))  # trace != 3 sigma^2

    def test_psd_enforced(self):
        # symmetric, correct trace, but one negative eigenvalue (0.02 - 0.03)
        bad = np.array([[0.02, 0.03, 0.0], [0.03, 0.02, 0.0], [0.0, 0.0, 0.02]])
        with pytest.raises(ValueError):
            GaussianSpec(GaussianMode.GENERAL, np.sqrt(bad.trace() / 3), bad)


class TestGaussianSampler:
    def test_mode_frequencies(self):
        rng = RngStream(10)
        counts = {m: 0 for m in GaussianMode}
        n = 100_000
        for _ in range(n):
            counts[sample_gaussian_spec(rng.fork("s", _)).mode] += 1
        assert counts[GaussianMode.COLOR_WHITE] / n == pytest.approx(0.4, abs=0.01)
        assert counts[GaussianMode.GRAY] / n == pytest.approx(0.4, abs=0.01)
        assert counts[GaussianMode.GENERAL] / n == pytest.approx(0.2, abs=0.01)

    def test_sigma_support_is_discrete(self):
        rng = RngStream(11)
        seen = set()
        for k in range(5000):
            s = sample_gaussian_spec(rng.fork("s", k))
            lvl = s.sigma * 255
            assert lvl == round(lvl) and 2 <= lvl <= 50
            seen.add(int(round(lvl)))
        assert len(seen) == 49

    def test_general_covariance_psd_and_trace(self):
        rng = RngStream(12)
        for k in range(300):
            s = sample_gaussian_spec(rng.fork("s", k))
            assert np.linalg.eigvalsh(s.covariance).min() >= -1e-12
            assert np.trace(s.covariance) / 3 == pytest.approx(s.sigma**2, rel=1e-10)


class TestAddGaussian:
    def test_zero_sigma_is_identity(self):
        img = Image(np.random.default_rng(0).random((3, 32, 32), dtype=np.float32))
        out = add_gaussian(img, GaussianSpec.color_white(0.0), RngStream(1))
        assert np.array_equal(out.data, img.data)

    def test_gray_mode_preserves_channel_differences(self):
        gen = np.random.default_rng(5)
        img = Image((gen.integers(30, 220, (3, 128, 128)) / 255.0).astype(np.float32))
        out = add_gaussian(img, GaussianSpec.gray(10 / 255), RngStream(2))
        interior = (out.data > 0.0) & (out.data < 1.0)
        ok = interior.all(axis=0)
        d_out = out.data[0][ok] - out.data[1][ok]
        d_in = img.data[0][ok] - img.data[1][ok]
        assert np.abs(d_out - d_in).max() <= F32_ULP

    def test_white_level_and_decorrelation(self):
        sigma = 25 / 255
        img = const_image(0.5, 256, 256)
        out = add_gaussian(img, GaussianSpec.color_white(sigma), RngStream(3))
        res = out.data.astype(np.float64) - 0.5
        for c in range(3):
            assert res[c].std() == pytest.approx(sigma, rel=0.02)
        flat = res.reshape(3, -1)
        corr = np.corrcoef(flat)
        off = corr[~np.eye(3, dtype=bool)]
        assert np.abs(off).max() < 0.02

    def test_general_covariance_matches_spec(self):
        rng = RngStream(4)
        spec = None
        for k in range(50):  # find a general-mode draw
            s = sample_gaussian_spec(rng.fork("find", k))
            if s.mode is GaussianMode.GENERAL and s.sigma > 10 / 255:
                spec = s
                break
        assert spec is not None
        img = const_image(0.5, 512, 512)
        out = add_gaussian(img, spec, rng.fork("noise"))
        res = (out.data.astype(np.float64) - 0.5).reshape(3, -1)
        emp = np.cov(res)
        rel = np.linalg.norm(emp - spec.covariance) / np.linalg.norm(spec.covariance)
        assert rel < 0.02

    def test_rejects_single_channel(self):
        mono = Image(np.zeros((1, 8, 8), dtype=np.float32))
        with pytest.raises(ValueError):
            add_gaussian(mono, GaussianSpec.color_white(0.1), RngStream(0))


class TestAddPoisson:
    def test_zero_signal_zero_noise(self):
        signal = const_image(0.0)
        target = Image(np.random.default_rng(1).random((3, 64, 64), dtype=np.float32))
        out = add_poisson(signal, target, PoissonSpec(3.0), RngStream(5))
        assert np.array_equal(out.data, clip01(target).data)

    def test_variance_at_alpha4(self):
        x = 0.5
        signal = const_image(x, 512, 512)
        out = add_poisson(signal, signal, PoissonSpec(4.0), RngStream(6))
        res = out.data.astype(np.float64) - x
        var = res.var()
        n = res.size
        assert var == pytest.approx(x * 1e-4, rel=0.05)
        assert abs(res.mean()) < 3 * np.sqrt(var / n)

    @pytest.mark.parametrize("alpha", [2.0, 3.0, 4.0])
    def test_variance_slope_follows_alpha(self, alpha):
        rng = RngStream(7)
        target = const_image(0.5, 384, 384)
        pts = []
        for i, x in enumerate(np.arange(0.1, 0.95, 0.1)):
            out = add_poisson(const_image(x, 384, 384), target,
                              PoissonSpec(alpha), rng.fork("lvl", i))
            res = out.data.astype(np.float64) - 0.5
            pts.append((x, res.var()))
        pts = np.array(pts)
        slope = np.polyfit(pts[:, 0], pts[:, 1], 1)[0]
        assert slope == pytest.approx(10.0 ** -alpha, rel=0.03)

    def test_variance_monotone_in_signal(self):
        rng = RngStream(8)
        target = const_image(0.5, 256, 256)
        vs = []
        for i, x in enumerate([0.1, 0.3, 0.5, 0.7, 0.9]):
            out = add_poisson(const_image(x, 256, 256), target,
                              PoissonSpec(3.0), rng.fork("m", i))
            vs.append((out.data.astype(np.float64) - 0.5).var())
        assert all(a < b for a, b in zip(vs, vs[1:]))

    def test_gray_variant_replicates_noise(self):
        signal = Image(np.random.default_rng(2).random((3, 96, 96), dtype=np.float32))
        target = const_image(0.5, 96, 96)
        out = add_poisson(signal, target, PoissonSpec(3.0, gray=True), RngStream(9))
        res = out.data - target.data
        assert np.abs(res[0] - res[1]).max() <= F32_ULP
        assert np.abs(res[1] - res[2]).max() <= F32_ULP

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            add_poisson(const_image(0.5, 32, 32), const_image(0.5, 16, 16),
                        PoissonSpec(3.0), RngStream(0))


class TestAddSpeckle:
    def test_zero_signal_is_identity(self):
        target = Image(np.random.default_rng(3).random((3, 32, 32), dtype=np.float32))
        out = add_speckle(const_image(0.0, 32, 32), target,
                          GaussianSpec.color_white(0.1), RngStream(10))
        assert np.array_equal(out.data, clip01(target).data)

    def test_zero_sigma_is_identity(self):
        target = Image(np.random.default_rng(4).random((3, 32, 32), dtype=np.float32))
        out = add_speckle(const_image(0.7, 32, 32), target,
                          GaussianSpec.color_white(0.0), RngStream(11))
        assert np.array_equal(out.data, clip01(target).data)

    def test_multiplicative_level(self):
        sigma = 20 / 255
        out = add_speckle(const_image(0.5, 512, 512), const_image(0.5, 512, 512),
                          GaussianSpec.color_white(sigma), RngStream(12))
        res = out.data.astype(np.float64) - 0.5
        assert res.std() == pytest.approx(0.5 * sigma, rel=0.03)

    def test_signal_dependence_ratio(self):
        sigma = 20 / 255
        rng = RngStream(13)
        stds = {}
        for x in (0.2, 0.8):
            out = add_speckle(const_image(x, 512, 512), const_image(0.5, 512, 512),
                              GaussianSpec.color_white(sigma), rng.fork("s", int(x * 10)))
            stds[x] = (out.data.astype(np.float64) - 0.5).std()
        assert stds[0.8] / stds[0.2] == pytest.approx(4.0, rel=0.05)


class TestSamplers:
    def test_poisson_spec_support(self):
        rng = RngStream(14)
        grays = 0
        n = 20_000
        for k in range(n):
            s = sample_poisson_spec(rng.fork("p", k))
            assert 2.0 <= s.alpha <= 4.0
            grays += s.gray
        assert grays / n == pytest.approx(0.5, abs=0.02)

    def test_speckle_spec_gray_probability(self):
        rng = RngStream(15)
        n = 20_000
        gray = sum(sample_speckle_spec(rng.fork("s", k)).mode is GaussianMode.GRAY
                   for k in range(n))
        assert gray / n == pytest.approx(0.5, abs=0.02)
