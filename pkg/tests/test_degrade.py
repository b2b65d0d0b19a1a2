import json
from pathlib import Path

import numpy as np
import pytest

from noisemill.degrade import (
    DegradationPlan, ManifestError, PipelineConfig, PlanError, StageKind,
    StageRecord, execute_plan, generate_dataset, plan_from_manifest,
    plan_to_manifest, replay, sample_plan,
)
from noisemill.imgcore import Image, RngStream, load_png, save_png
from noisemill.testimages import synth_natural

NO_OPTIONAL = PipelineConfig(poisson_prob=0.0, speckle_prob=0.0,
                             sensor_prob=0.0, resize_prob=0.0)
CROP_ONLY = PipelineConfig(gaussian_prob=0.0, jpeg_prob=0.0, poisson_prob=0.0,
                           speckle_prob=0.0, sensor_prob=0.0, resize_prob=0.0)


def plan_for(seed, config=None, pair=0):
    rng = RngStream(seed).fork("image", 0).fork("pair", pair)
    return sample_plan(rng, "test.png", config=config)


class TestPlanSampling:
    def test_mandatory_stages_always_doubled(self):
        for seed in range(300):
            plan = plan_for(seed)
            kinds = [s.kind for s in plan.stages]
            assert kinds.count(StageKind.GAUSSIAN) == 2
            assert kinds.count(StageKind.JPEG) == 2
            assert kinds[-1] is StageKind.CROP

    def test_optional_stage_mean_counts(self):
        n = 10_000
        totals = {k: 0 for k in (StageKind.POISSON, StageKind.SPECKLE,
                                 StageKind.SENSOR, StageKind.RESIZE)}
        for seed in range(n):
            for st in plan_for(seed).stages:
                if st.kind in totals:
                    totals[st.kind] += 1
        for kind, total in totals.items():
            assert total / n == pytest.approx(1.0, abs=0.03), kind

    def test_round_tags_cover_both_rounds(self):
        plan = plan_for(1)
        rounds = {st.round for st in plan.stages}
        assert rounds <= {1, 2} and 1 in rounds and 2 in rounds

    def test_shuffle_is_uniform_on_fixed_multiset(self):
        # optional stages off: every plan is {gaussian, jpeg} x rounds 1, 2,
        # giving 4 distinguishable items and 24 equally likely orders
        n = 30_000
        counts = {}
        for seed in range(n):
            plan = plan_for(seed, config=NO_OPTIONAL)
            key = tuple((s.kind.value, s.round) for s in plan.stages[:-1])
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 24
        for key, c in counts.items():
            assert abs(c / n - 1 / 24) < 0.15 / 24, (key, c / n)

    def test_crop_position_within_final_geometry(self):
        for seed in range(200):
            plan = plan_for(seed)
            h, w = plan.source_size
            for st in plan.stages[:-1]:
                if st.kind is StageKind.RESIZE:
                    h, w = st.params["out_height"], st.params["out_width"]
            y, x, s, _ = plan.crop
            assert 0 <= y <= h - s and 0 <= x <= w - s

    def test_plan_is_deterministic(self):
        a = plan_to_manifest(plan_for(77))
        b = plan_to_manifest(plan_for(77))
        assert a == b


class TestPlanValidation:
    def test_crop_must_be_last(self):
        plan = plan_for(2)
        stages = (plan.stages[-1],) + plan.stages[:-1]
        with pytest.raises(PlanError):
            DegradationPlan(source_id="x", master_seed=0,
                            source_size=plan.source_size, stages=stages)

    def test_unknown_round_rejected(self):
        with pytest.raises(PlanError):
            StageRecord(kind=StageKind.GAUSSIAN, round=3, params={},
                        rng_path=())

    def test_at_most_two_per_kind(self):
        plan = plan_for(3)
        g = next(s for s in plan.stages if s.kind is StageKind.GAUSSIAN)
        stages = (g, g, g) + tuple(s for s in plan.stages if s.kind
                                   is not StageKind.GAUSSIAN)
        with pytest.raises(PlanError):
            DegradationPlan(source_id="x", master_seed=0,
                            source_size=plan.source_size, stages=stages)


class TestExecution:
    def test_crop_only_plan_is_pure_crop(self, hq_image):
        plan = plan_for(4, config=CROP_ONLY)
        assert len(plan.stages) == 1
        pair = execute_plan(hq_image, plan)
        y, x, s, _ = plan.crop
        window = hq_image.data[:, y:y + s, x:x + s]
        assert np.array_equal(pair.noisy.data, window)
        assert np.array_equal(pair.clean.data, window)

    def test_identity_resize_plus_crop(self, hq_image):
        rec = StageRecord(kind=StageKind.RESIZE, round=1,
                          params={"kernel": "bicubic", "scale": 1.0,
                                  "out_height": 544, "out_width": 544},
                          rng_path=(("noise", 0),))
        crop = StageRecord(kind=StageKind.CROP, round=2,
                           params={"y": 100, "x": 60, "size": 128},
                           rng_path=(("noise", 1),))
        plan = DegradationPlan(source_id="x", master_seed=0,
                               source_size=(544, 544), stages=(rec, crop))
        pair = execute_plan(hq_image, plan)
        window = hq_image.data[:, 100:228, 60:188]
        assert np.array_equal(pair.noisy.data, window)
        assert np.array_equal(pair.clean.data, window)

    def test_execution_is_deterministic(self, hq_image):
        plan = plan_for(5)
        a = execute_plan(hq_image, plan)
        b = execute_plan(hq_image, plan)
        assert np.array_equal(a.noisy.data, b.noisy.data)
        assert np.array_equal(a.clean.data, b.clean.data)

    def test_output_patch_geometry(self, hq_image):
        for seed in (6, 7, 8):
            pair = execute_plan(hq_image, plan_for(seed))
            assert pair.noisy.shape == (3, 128, 128)
            assert pair.clean.shape == (3, 128, 128)
            assert pair.noisy.data.min() >= 0 and pair.noisy.data.max() <= 1

    def test_clean_branch_only_touched_by_geometry_stages(self, hq_image):
        noise_kinds = {StageKind.GAUSSIAN, StageKind.POISSON,
                       StageKind.SPECKLE, StageKind.JPEG}
        seen = set()
        for seed in range(30):
            trace = []
            execute_plan(hq_image, plan_for(seed), trace=trace)
            for kind, touched in trace:
                seen.add(kind)
                if kind in noise_kinds:
                    assert touched == ("noisy",)
                else:
                    assert touched == ("noisy", "clean")
        assert noise_kinds <= seen  # every noise kind actually exercised

    def test_wrong_hq_dims_rejected(self):
        small = synth_natural(1, 256, 256)
        with pytest.raises(PlanError):
            execute_plan(small, plan_for(9))

    def test_clean_differs_from_noisy(self, hq_image):
        pair = execute_plan(hq_image, plan_for(10))
        assert not np.array_equal(pair.noisy.data, pair.clean.data)


class TestManifest:
    def test_roundtrip_identity(self):
        plan = plan_for(11)
        back = plan_from_manifest(plan_to_manifest(plan))
        assert back == plan

    def test_replay_bit_identical(self, hq_image):
        plan = plan_for(12)
        pair = execute_plan(hq_image, plan)
        again = replay(hq_image, plan_to_manifest(plan))
        assert np.array_equal(pair.noisy.data, again.noisy.data)
        assert np.array_equal(pair.clean.data, again.clean.data)

    def test_corrupted_kind_is_schema_error(self):
        doc = json.loads(plan_to_manifest(plan_for(13)))
        doc["stages"][0]["kind"] = "gaussy"
        with pytest.raises(ManifestError):
            plan_from_manifest(json.dumps(doc))

    def test_crop_not_last_is_invariant_error(self):
        doc = json.loads(plan_to_manifest(plan_for(14)))
        doc["stages"] = doc["stages"][::-1]
        with pytest.raises(PlanError):
            plan_from_manifest(json.dumps(doc))

    def test_version_mismatch(self):
        doc = json.loads(plan_to_manifest(plan_for(15)))
        doc["schema_version"] = 999
        with pytest.raises(ManifestError):
            plan_from_manifest(json.dumps(doc))

    def test_invalid_json(self):
        with pytest.raises(ManifestError):
            plan_from_manifest("{not json")

    def test_crop_field_consistency_checked(self):
        doc = json.loads(plan_to_manifest(plan_for(16)))
        doc["crop"][0] += 1
        with pytest.raises(ManifestError):
            plan_from_manifest(json.dumps(doc))


def _write_inputs(path: Path, count: int, size: int = 544):
    path.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        save_png(synth_natural(500 + i, size, size), path / f"hq_{i:02d}.png")


class TestGenerateDataset:
    def test_pair_counting_and_layout(self, tmp_path):
        _write_inputs(tmp_path / "in", 2)
        summary = generate_dataset(tmp_path / "in", tmp_path / "out",
                                   seed=5, pairs_per_image=3)
        assert summary["pairs"] == 6
        names = sorted(p.name for p in (tmp_path / "out").iterdir())
        assert len(names) == 18  # noisy + clean + manifest per pair
        for i in range(6):
            assert f"noisy_{i:04d}.png" in names
            assert f"clean_{i:04d}.png" in names
            assert f"manifest_{i:04d}.json" in names
        # frequency summary agrees with the plan sampler's fixed counts
        assert summary["stages_per_pair"]["gaussian"] == 2.0
        assert summary["stages_per_pair"]["jpeg"] == 2.0
        assert summary["stages_per_pair"]["crop"] == 1.0

    def test_worker_count_invariance(self, tmp_path):
        _write_inputs(tmp_path / "in", 2)
        generate_dataset(tmp_path / "in", tmp_path / "w1", seed=5,
                         pairs_per_image=2, workers=1)
        generate_dataset(tmp_path / "in", tmp_path / "w8", seed=5,
                         pairs_per_image=2, workers=8)
        files1 = sorted((tmp_path / "w1").iterdir())
        files8 = sorted((tmp_path / "w8").iterdir())
        assert [f.name for f in files1] == [f.name for f in files8]
        for a, b in zip(files1, files8):
            assert a.read_bytes() == b.read_bytes(), a.name

    def test_small_images_skipped(self, tmp_path):
        (tmp_path / "in").mkdir()
        save_png(synth_natural(1, 100, 100), tmp_path / "in" / "tiny.png")
        save_png(synth_natural(2, 544, 544), tmp_path / "in" / "ok.png")
        summary = generate_dataset(tmp_path / "in", tmp_path / "out",
                                   seed=1, pairs_per_image=1)
        assert summary["pairs"] == 1
        assert summary["skipped"] == [str(tmp_path / "in" / "tiny.png")]

    def test_oversized_inputs_are_prep_cropped_and_replayable(self, tmp_path):
        (tmp_path / "in").mkdir()
        save_png(synth_natural(3, 600, 580), tmp_path / "in" / "big.png")
        generate_dataset(tmp_path / "in", tmp_path / "out", seed=2,
                         pairs_per_image=1)
        manifest = (tmp_path / "out" / "manifest_0000.json").read_text()
        plan = plan_from_manifest(manifest)
        assert plan.prep_crop is not None
        assert plan.original_size == (600, 580)
        hq = load_png(tmp_path / "in" / "big.png")
        pair = replay(hq, manifest)
        noisy_png = load_png(tmp_path / "out" / "noisy_0000.png")
        from noisemill.imgcore import quantize8
        assert np.array_equal(quantize8(pair.noisy.data),
                              quantize8(noisy_png.data))

    def test_missing_input_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            generate_dataset(tmp_path / "nope", tmp_path / "out", seed=1,
                             pairs_per_image=1)
