import json
from pathlib import Path

import numpy as np
import pytest

from noisemill.degrade import PipelineConfig, compute_pair, generate_dataset
from noisemill.imgcore import load_png, quantize8, save_png
from noisemill.testimages import synth_natural

from trainbridge import next_pair, open_pipeline, replay_pair
from trainbridge.bridge import BridgeError

SEED = 3131


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Two 544x544 HQ images plus a config that points at them."""
    root = tmp_path_factory.mktemp("bridge")
    hq = root / "hq"
    hq.mkdir()
    for i in range(2):
        save_png(synth_natural(820 + i, 544, 544), hq / f"hq_{i:02d}.png")
    cfg = PipelineConfig(input_dir=str(hq), pairs_per_image=3)
    cfg_path = root / "config.json"
    cfg_path.write_text(cfg.to_json())
    return root, hq, cfg_path, cfg


class TestOpenPipeline:
    def test_positions_at_origin(self, corpus):
        _, _, cfg_path, _ = corpus
        handle = open_pipeline(cfg_path, SEED)
        assert handle.cursor == (0, 0)
        assert len(handle.files) == 2

    def test_same_args_same_first_pair(self, corpus):
        _, _, cfg_path, _ = corpus
        a = next_pair(open_pipeline(cfg_path, SEED))
        b = next_pair(open_pipeline(cfg_path, SEED))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        assert a[2] == b[2]

    def test_missing_hq_dir(self, corpus):
        root, _, cfg_path, cfg = corpus
        bad = root / "bad.json"
        doc = json.loads(cfg.to_json())
        doc["input_dir"] = str(root / "nothing")
        bad.write_text(json.dumps(doc))
        with pytest.raises(BridgeError):
            open_pipeline(bad, SEED)

    def test_config_overrides_reflected_in_manifests(self, corpus):
        root, hq, _, _ = corpus
        doc = json.loads(PipelineConfig(
            input_dir=str(hq), pairs_per_image=1,
            poisson_prob=0.0, speckle_prob=0.0, sensor_prob=0.0,
            resize_prob=0.0).to_json())
        path = root / "no_optional.json"
        path.write_text(json.dumps(doc))
        handle = open_pipeline(path, SEED)
        kinds = [s["kind"] for s in json.loads(next_pair(handle)[2])["stages"]]
        assert sorted(kinds) == ["crop", "gaussian", "gaussian", "jpeg", "jpeg"]


class TestNextPair:
    def test_shapes_and_range(self, corpus):
        _, _, cfg_path, _ = corpus
        handle = open_pipeline(cfg_path, SEED)
        noisy, clean, manifest = next_pair(handle)
        assert noisy.shape == (3, 128, 128) and clean.shape == (3, 128, 128)
        assert noisy.dtype == np.float32 and clean.dtype == np.float32
        assert 0.0 <= noisy.min() and noisy.max() <= 1.0
        json.loads(manifest)  # valid manifest text

    def test_cursor_advances_across_images(self, corpus):
        _, _, cfg_path, _ = corpus
        handle = open_pipeline(cfg_path, SEED)
        seen = [handle.cursor]
        for _ in range(5):
            next_pair(handle)
            seen.append(handle.cursor)
        assert seen == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]

    def test_exhaustion_raises_stop_iteration(self, corpus):
        _, _, cfg_path, _ = corpus
        handle = open_pipeline(cfg_path, SEED)
        pairs = list(handle)
        assert len(pairs) == 6
        with pytest.raises(StopIteration):
            next_pair(handle)

    def test_different_seeds_differ(self, corpus):
        _, _, cfg_path, _ = corpus
        a = next_pair(open_pipeline(cfg_path, SEED))
        b = next_pair(open_pipeline(cfg_path, SEED + 1))
        assert not np.array_equal(a[0], b[0])

    def test_small_images_skipped(self, corpus, tmp_path):
        hq = tmp_path / "hq"
        hq.mkdir()
        save_png(synth_natural(1, 100, 100), hq / "a_tiny.png")
        save_png(synth_natural(2, 544, 544), hq / "b_ok.png")
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(PipelineConfig(input_dir=str(hq),
                                           pairs_per_image=2).to_json())
        handle = open_pipeline(cfg_path, SEED)
        pairs = list(handle)
        assert len(pairs) == 2  # only the usable image contributes


class TestReplayPair:
    def test_replay_matches_generation(self, corpus):
        _, hq, cfg_path, _ = corpus
        handle = open_pipeline(cfg_path, SEED)
        noisy, clean, manifest = next_pair(handle)
        src = json.loads(manifest)["source_id"]
        rn, rc = replay_pair(hq / src, manifest)
        assert np.array_equal(rn, noisy) and np.array_equal(rc, clean)

    def test_corrupted_manifest_rejected(self, corpus):
        _, hq, cfg_path, _ = corpus
        noisy, clean, manifest = next_pair(open_pipeline(cfg_path, SEED))
        doc = json.loads(manifest)
        doc["stages"][0]["kind"] = "mystery"
        with pytest.raises(Exception):
            replay_pair(hq / doc["source_id"], json.dumps(doc))


class TestAcceptanceCriterion11:
    def test_bridge_equivalence_50_pairs(self, corpus, tmp_path):
        """[SECONDARY] in-memory pairs are bit-identical to the engine's
        execute_plan results and match CLI PNGs within 8-bit quantization."""
        _, hq, _, _ = corpus
        cfg = PipelineConfig(input_dir=str(hq), pairs_per_image=25)
        cfg_path = tmp_path / "cfg50.json"
        cfg_path.write_text(cfg.to_json())

        out = tmp_path / "cli_out"
        generate_dataset(hq, out, seed=SEED, pairs_per_image=25, config=cfg)

        handle = open_pipeline(cfg_path, SEED)
        checked = 0
        in_memory_ok = png_ok = True
        for i in range(2):
            for k in range(25):
                noisy, clean, manifest = next_pair(handle)
                direct = compute_pair(handle.files[i], i, k, SEED, cfg)
                if not (np.array_equal(noisy, direct.noisy.data)
                        and np.array_equal(clean, direct.clean.data)):
                    in_memory_ok = False
                idx = i * 25 + k
                png_n = load_png(out / f"noisy_{idx:04d}.png")
                png_c = load_png(out / f"clean_{idx:04d}.png")
                if not (np.array_equal(quantize8(noisy), quantize8(png_n.data))
                        and np.array_equal(quantize8(clean), quantize8(png_c.data))):
                    png_ok = False
                checked += 1
        line = (f"[{'PASS' if in_memory_ok and png_ok else 'FAIL'}] criterion 11: "
                f"bridge equivalence -- {checked} pairs, in-memory bit-identical: "
                f"{in_memory_ok}, CLI PNGs within quantization: {png_ok}")
        print(line)
        assert checked == 50 and in_memory_ok and png_ok, line
