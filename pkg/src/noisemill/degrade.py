"""Degradation pipeline planner and executor.

A plan samples the shuffled double-degradation sequence up front: per round,
Gaussian and JPEG are always included, Poisson / speckle / camera-sensor /
resize each join with probability 0.5; the union is shuffled flat and a final
crop is appended.  Every stage parameter is drawn at plan time and recorded,
so executing a plan is a pure function of (hq image, plan) and the serialized
manifest replays bit-identically.
"""

from __future__ import annotations

import enum
import json
import multiprocessing
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import ispsim, jpegsim, noisegen, resizer
from .imgcore import Image, RngStream, clip01, load_png, save_png

__all__ = [
    "PipelineConfig",
    "StageKind",
    "StageRecord",
    "DegradationPlan",
    "PairSample",
    "PlanError",
    "ManifestError",
    "sample_plan",
    "execute_plan",
    "compute_pair",
    "load_hq",
    "plan_to_manifest",
    "plan_from_manifest",
    "replay",
    "generate_dataset",
]

SCHEMA_VERSION = 1


class PlanError(ValueError):
    pass


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Degradation knobs; defaults are the published pipeline values.

    input_dir and pairs_per_image let one config file drive both the CLI and
    in-process consumers; CLI flags override them.
    """

    hq_size: int = 544
    patch_size: int = 128
    gaussian_prob: float = 1.0
    jpeg_prob: float = 1.0
    poisson_prob: float = 0.5
    speckle_prob: float = 0.5
    sensor_prob: float = 0.5
    resize_prob: float = 0.5
    gray_prob: float = 0.5
    gaussian_mode_probs: tuple[float, float, float] = (0.4, 0.4, 0.2)
    sigma_levels_255: tuple[int, int] = (2, 50)
    alpha_range: tuple[float, float] = (2.0, 4.0)
    quality_range: tuple[int, int] = (20, 95)
    scale_range: tuple[float, float] = (0.5, 2.0)
    input_dir: str | None = None
    pairs_per_image: int = 1

    def __post_init__(self):
        for name in ("gaussian_prob", "jpeg_prob", "poisson_prob", "speckle_prob",
                     "sensor_prob", "resize_prob", "gray_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.patch_size < 16 or self.hq_size < self.patch_size:
            raise ValueError("invalid patch/hq sizes")

    @staticmethod
    def from_json(text: str) -> "PipelineConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ManifestError("config root must be an object")
        known = {f for f in PipelineConfig.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ManifestError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for k, v in doc.items():
            kwargs[k] = tuple(v) if isinstance(v, list) else v
        return PipelineConfig(**kwargs)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


class StageKind(enum.Enum):
    GAUSSIAN = "gaussian"
    POISSON = "poisson"
    SPECKLE = "speckle"
    JPEG = "jpeg"
    SENSOR = "sensor"
    RESIZE = "resize"
    CROP = "crop"


@dataclass(frozen=True)
class StageRecord:
    """One fully parameterized stage: enough for bit-exact replay."""

    kind: StageKind
    round: int
    params: dict
    rng_path: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if self.round not in (1, 2):
            raise PlanError("stage round must be 1 or 2")


@dataclass(frozen=True)
class DegradationPlan:
    source_id: str
    master_seed: int
    source_size: tuple[int, int]          # (h, w) of the hq patch fed in
    stages: tuple[StageRecord, ...]       # crop is always the final stage
    original_size: tuple[int, int] | None = None
    prep_crop: tuple[int, int] | None = None  # (y, x) into the original image

    def __post_init__(self):
        validate_plan(self)

    @property
    def crop(self) -> tuple[int, int, int, int]:
        p = self.stages[-1].params
        return (p["y"], p["x"], p["size"], p["size"])


@dataclass(frozen=True)
class PairSample:
    noisy: Image
    clean: Image
    plan: DegradationPlan


def validate_plan(plan: DegradationPlan) -> None:
    if not plan.stages:
        raise PlanError("plan has no stages")
    if plan.stages[-1].kind is not StageKind.CROP:
        raise PlanError("crop must be the final stage")
    counts = {}
    for j, st in enumerate(plan.stages):
        counts[st.kind] = counts.get(st.kind, 0) + 1
        if st.kind is StageKind.CROP and j != len(plan.stages) - 1:
            raise PlanError("crop must appear exactly once, last")
    if counts.get(StageKind.CROP, 0) != 1:
        raise PlanError("plan needs exactly one crop")
    for kind, n in counts.items():
        if kind is not StageKind.CROP and n > 2:
            raise PlanError(f"stage {kind.value} appears {n} times (max 2)")
    # geometry walk: crop must fit the final dims
    try:
        h, w = plan.source_size
        for st in plan.stages[:-1]:
            if st.kind is StageKind.RESIZE:
                h, w = st.params["out_height"], st.params["out_width"]
        c = plan.stages[-1].params
        fits = 0 <= c["y"] <= h - c["size"] and 0 <= c["x"] <= w - c["size"]
    except (KeyError, TypeError) as exc:
        raise PlanError(f"stage params incomplete: {exc}") from exc
    if not fits:
        raise PlanError(f"crop {c} does not fit final geometry {h}x{w}")


# ---------------------------------------------------------------------------
# stage parameter sampling
# ---------------------------------------------------------------------------

def _gaussian_params(rng: RngStream, cfg: PipelineConfig) -> dict:
    spec = noisegen.sample_gaussian_spec(
        rng, mode_probs=cfg.gaussian_mode_probs, levels_255=cfg.sigma_levels_255)
    return {"mode": spec.mode.value, "sigma": spec.sigma,
            "covariance": spec.covariance.tolist()}


def _speckle_params(rng: RngStream, cfg: PipelineConfig) -> dict:
    spec = noisegen.sample_speckle_spec(
        rng, gray_prob=cfg.gray_prob, levels_255=cfg.sigma_levels_255)
    return {"mode": spec.mode.value, "sigma": spec.sigma,
            "covariance": spec.covariance.tolist()}


def _poisson_params(rng: RngStream, cfg: PipelineConfig) -> dict:
    spec = noisegen.sample_poisson_spec(
        rng, alpha_range=cfg.alpha_range, gray_prob=cfg.gray_prob)
    return {"alpha": spec.alpha, "gray": spec.gray}


def _jpeg_params(rng: RngStream, cfg: PipelineConfig) -> dict:
    spec = jpegsim.sample_jpeg_spec(rng, quality_range=cfg.quality_range)
    return {"quality": spec.quality, "subsample_chroma": spec.subsample_chroma}


def _sensor_params(rng: RngStream, cfg: PipelineConfig) -> dict:
    cam = ispsim.BUILTIN_CAMERAS[int(rng.integers(0, len(ispsim.BUILTIN_CAMERAS) - 1))]
    wb_red = float(rng.uniform(*cam.wb_red_range))
    wb_blue = float(rng.uniform(*cam.wb_blue_range))
    exposure = float(2.0 ** rng.uniform(*cam.exposure_log2_range))
    noise = ispsim.sample_sensor_params(rng)
    return {"camera": cam.name, "wb_red": wb_red, "wb_blue": wb_blue,
            "exposure_gain": exposure,
            "lambda_shot": noise.lambda_shot, "lambda_read": noise.lambda_read}


def _resize_params(rng: RngStream, cfg: PipelineConfig,
                   cur: tuple[int, int]) -> dict:
    h, w = cur
    lo = max(cfg.scale_range[0], cfg.patch_size / h, cfg.patch_size / w)
    hi = cfg.scale_range[1]
    if lo > hi:
        raise PlanError(f"source {h}x{w} too small to keep {cfg.patch_size} patch")
    spec = resizer.sample_resize_spec(rng, cur, scale_range=(lo, hi))
    return {"kernel": spec.kernel.value, "scale": spec.scale,
            "out_height": spec.out_height, "out_width": spec.out_width}


def sample_plan(rng: RngStream, source_id: str,
                source_size: tuple[int, int] | None = None,
                config: PipelineConfig | None = None,
                original_size: tuple[int, int] | None = None,
                prep_crop: tuple[int, int] | None = None) -> DegradationPlan:
    """Sample inclusion, a flat uniform shuffle, then all stage parameters."""
    cfg = config or PipelineConfig()
    size = source_size or (cfg.hq_size, cfg.hq_size)

    candidates: list[tuple[StageKind, int]] = []
    probs = {
        StageKind.GAUSSIAN: cfg.gaussian_prob,
        StageKind.JPEG: cfg.jpeg_prob,
        StageKind.POISSON: cfg.poisson_prob,
        StageKind.SPECKLE: cfg.speckle_prob,
        StageKind.SENSOR: cfg.sensor_prob,
        StageKind.RESIZE: cfg.resize_prob,
    }
    for rnd in (1, 2):
        inc = rng.fork("include", rnd)
        for kind in (StageKind.GAUSSIAN, StageKind.JPEG, StageKind.POISSON,
                     StageKind.SPECKLE, StageKind.SENSOR, StageKind.RESIZE):
            if inc.uniform() < probs[kind]:
                candidates.append((kind, rnd))

    perm = rng.fork("order").permutation(len(candidates))
    shuffled = [candidates[int(j)] for j in perm]

    stages = []
    cur = size
    for j, (kind, rnd) in enumerate(shuffled):
        prng = rng.fork("stage", j)
        if kind is StageKind.GAUSSIAN:
            params = _gaussian_params(prng, cfg)
        elif kind is StageKind.JPEG:
            params = _jpeg_params(prng, cfg)
        elif kind is StageKind.POISSON:
            params = _poisson_params(prng, cfg)
        elif kind is StageKind.SPECKLE:
            params = _speckle_params(prng, cfg)
        elif kind is StageKind.SENSOR:
            params = _sensor_params(prng, cfg)
        else:
            params = _resize_params(prng, cfg, cur)
            cur = (params["out_height"], params["out_width"])
        stages.append(StageRecord(kind=kind, round=rnd, params=params,
                                  rng_path=rng.fork("noise", j).path))

    crng = rng.fork("crop")
    ps = cfg.patch_size
    if cur[0] < ps or cur[1] < ps:
        raise PlanError(f"final geometry {cur} smaller than patch {ps}")
    y = int(crng.integers(0, cur[0] - ps))
    x = int(crng.integers(0, cur[1] - ps))
    stages.append(StageRecord(kind=StageKind.CROP, round=2,
                              params={"y": y, "x": x, "size": ps},
                              rng_path=rng.fork("noise", len(shuffled)).path))

    return DegradationPlan(source_id=source_id, master_seed=rng.master_seed,
                           source_size=size, stages=tuple(stages),
                           original_size=original_size, prep_crop=prep_crop)


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _gaussian_spec_from(params: dict) -> noisegen.GaussianSpec:
    return noisegen.GaussianSpec(
        mode=noisegen.GaussianMode(params["mode"]),
        sigma=float(params["sigma"]),
        covariance=np.array(params["covariance"], dtype=np.float64))


def execute_plan(hq: Image, plan: DegradationPlan,
                 trace: list | None = None) -> PairSample:
    """Run both branches through the plan; returns the cropped pair.

    Gaussian/JPEG touch only the noisy branch; Poisson/speckle shape their
    noise from the current clean branch; sensor applies the full
    reverse-noise-forward to the noisy branch and tone remapping to the
    clean branch; resize and crop move both branches in lockstep.
    """
    if hq.channels != 3:
        raise PlanError("execution requires a 3-channel hq image")
    if (hq.height, hq.width) != tuple(plan.source_size):
        raise PlanError(
            f"hq dims {hq.height}x{hq.width} do not match plan source "
            f"{plan.source_size[0]}x{plan.source_size[1]}")

    def log(kind, touched):
        if trace is not None:
            trace.append((kind, touched))

    noisy = clean = hq
    for record in plan.stages[:-1]:
        rng = RngStream(plan.master_seed, path=tuple(record.rng_path))
        if record.kind is StageKind.GAUSSIAN:
            noisy = noisegen.add_gaussian(noisy, _gaussian_spec_from(record.params), rng)
            log(record.kind, ("noisy",))
        elif record.kind is StageKind.JPEG:
            spec = jpegsim.JpegSpec(quality=int(record.params["quality"]),
                                    subsample_chroma=bool(record.params["subsample_chroma"]))
            noisy = jpegsim.jpeg_roundtrip(noisy, spec)
            log(record.kind, ("noisy",))
        elif record.kind is StageKind.POISSON:
            spec = noisegen.PoissonSpec(alpha=float(record.params["alpha"]),
                                        gray=bool(record.params["gray"]))
            noisy = noisegen.add_poisson(clean, noisy, spec, rng)
            log(record.kind, ("noisy",))
        elif record.kind is StageKind.SPECKLE:
            noisy = noisegen.add_speckle(clean, noisy, _gaussian_spec_from(record.params), rng)
            log(record.kind, ("noisy",))
        elif record.kind is StageKind.SENSOR:
            p = record.params
            cam = ispsim.builtin_camera(p["camera"])
            ctx = ispsim.IspContext(camera=p["camera"], wb_red=float(p["wb_red"]),
                                    wb_blue=float(p["wb_blue"]),
                                    exposure_gain=float(p["exposure_gain"]))
            noise = ispsim.SensorNoiseParams(lambda_shot=float(p["lambda_shot"]),
                                             lambda_read=float(p["lambda_read"]))
            noisy, clean = ispsim.sensor_noise_stage(noisy, clean, cam, rng,
                                                     ctx=ctx, params=noise)
            log(record.kind, ("noisy", "clean"))
        elif record.kind is StageKind.RESIZE:
            spec = resizer.ResizeSpec(kernel=resizer.ResizeKernel(record.params["kernel"]),
                                      scale=float(record.params["scale"]),
                                      out_height=int(record.params["out_height"]),
                                      out_width=int(record.params["out_width"]))
            noisy, clean = resizer.resize_pair(noisy, clean, spec)
            log(record.kind, ("noisy", "clean"))
        else:
            raise PlanError(f"unexpected stage kind {record.kind}")
        noisy, clean = clip01(noisy), clip01(clean)
        if noisy.shape != clean.shape:
            raise PlanError("branch geometry diverged")

    c = plan.stages[-1].params
    y, x, s = c["y"], c["x"], c["size"]
    noisy = Image(noisy.data[:, y:y + s, x:x + s])
    clean = Image(clean.data[:, y:y + s, x:x + s])
    log(StageKind.CROP, ("noisy", "clean"))
    return PairSample(noisy=noisy, clean=clean, plan=plan)


# ---------------------------------------------------------------------------
# manifest serialization
# ---------------------------------------------------------------------------

def plan_to_manifest(plan: DegradationPlan) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "source_id": plan.source_id,
        "master_seed": plan.master_seed,
        "source_size": list(plan.source_size),
        "crop": list(plan.crop),
        "stages": [
            {"kind": st.kind.value, "round": st.round,
             "rng_path": [[lbl, idx] for lbl, idx in st.rng_path],
             "params": st.params}
            for st in plan.stages
        ],
    }
    if plan.original_size is not None:
        doc["original_size"] = list(plan.original_size)
    if plan.prep_crop is not None:
        doc["prep_crop"] = list(plan.prep_crop)
    return json.dumps(doc, indent=1)


def plan_from_manifest(text: str | bytes) -> DegradationPlan:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    try:
        if doc["schema_version"] != SCHEMA_VERSION:
            raise ManifestError(
                f"manifest schema_version {doc['schema_version']} unsupported "
                f"(expected {SCHEMA_VERSION})")
        stages = []
        for st in doc["stages"]:
            try:
                kind = StageKind(st["kind"])
            except ValueError as exc:
                raise ManifestError(f"unknown stage kind {st['kind']!r}") from exc
            stages.append(StageRecord(
                kind=kind, round=int(st["round"]),
                params=st["params"],
                rng_path=tuple((str(l), int(i)) for l, i in st["rng_path"])))
        plan = DegradationPlan(
            source_id=str(doc["source_id"]),
            master_seed=int(doc["master_seed"]),
            source_size=tuple(doc["source_size"]),
            stages=tuple(stages),
            original_size=tuple(doc["original_size"]) if "original_size" in doc else None,
            prep_crop=tuple(doc["prep_crop"]) if "prep_crop" in doc else None)
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"manifest is missing required field: {exc}") from exc
    if list(plan.crop) != list(doc["crop"]):
        raise ManifestError("top-level crop disagrees with the final stage")
    return plan


def replay(hq: Image, manifest: str | bytes) -> PairSample:
    """Deserialize a manifest and re-execute it bit-identically."""
    plan = plan_from_manifest(manifest)
    if plan.prep_crop is not None and (hq.height, hq.width) != tuple(plan.source_size):
        if plan.original_size is not None and \
                (hq.height, hq.width) != tuple(plan.original_size):
            raise PlanError(
                f"hq dims {hq.height}x{hq.width} match neither the plan source "
                f"{plan.source_size} nor the original {plan.original_size}")
        y, x = plan.prep_crop
        h, w = plan.source_size
        hq = Image(hq.data[:, y:y + h, x:x + w])
    return execute_plan(hq, plan)


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------

def _prep_hq(img: Image, rng: RngStream, hq_size: int
             ) -> tuple[Image, tuple[int, int] | None]:
    """Random seeded crop of the hq patch; None prep offset if already sized."""
    if img.height == hq_size and img.width == hq_size:
        return img, None
    y = int(rng.integers(0, img.height - hq_size))
    x = int(rng.integers(0, img.width - hq_size))
    return Image(img.data[:, y:y + hq_size, x:x + hq_size]), (y, x)


def load_hq(path, hq_size: int) -> Image | None:
    """Load a source PNG as 3-channel; None if too small for the hq patch."""
    img = load_png(path)
    if img.channels == 1:
        img = Image(np.repeat(img.data, 3, axis=0))
    if img.height < hq_size or img.width < hq_size:
        return None
    return img


def compute_pair(path, image_index: int, pair_index: int, seed: int,
                 config: PipelineConfig | None = None) -> PairSample:
    """The pair at cursor (image_index, pair_index): the single source of
    truth shared by the dataset writer and in-process consumers, keyed
    purely by (seed, image index, pair index)."""
    cfg = config or PipelineConfig()
    img = load_hq(path, cfg.hq_size)
    if img is None:
        raise PlanError(f"{path} smaller than the {cfg.hq_size} hq patch")
    root = RngStream(seed).fork("image", image_index)
    hq, prep = _prep_hq(img, root.fork("prep"), cfg.hq_size)
    plan = sample_plan(root.fork("pair", pair_index),
                       source_id=Path(path).name,
                       source_size=(cfg.hq_size, cfg.hq_size), config=cfg,
                       original_size=(img.height, img.width) if prep else None,
                       prep_crop=prep)
    return execute_plan(hq, plan)


def _generate_for_image(args) -> dict:
    (path, image_index, seed, pairs, cfg_json, out_dir) = args
    cfg = PipelineConfig.from_json(cfg_json)
    out = Path(out_dir)
    if load_hq(path, cfg.hq_size) is None:
        return {"image": str(path), "skipped": True, "pairs": 0, "stage_counts": {}}
    counts: dict[str, int] = {}
    for k in range(pairs):
        sample = compute_pair(path, image_index, k, seed, cfg)
        idx = image_index * pairs + k
        save_png(sample.noisy, out / f"noisy_{idx:04d}.png")
        save_png(sample.clean, out / f"clean_{idx:04d}.png")
        (out / f"manifest_{idx:04d}.json").write_text(plan_to_manifest(sample.plan))
        for st in sample.plan.stages:
            counts[st.kind.value] = counts.get(st.kind.value, 0) + 1
    return {"image": str(path), "skipped": False, "pairs": pairs,
            "stage_counts": counts}


def generate_dataset(input_dir, output_dir, seed: int, pairs_per_image: int,
                     config: PipelineConfig | None = None,
                     workers: int = 1) -> dict:
    """Degrade every PNG under input_dir into paired patches plus manifests.

    Output bytes are invariant to worker count: every pair's randomness is
    keyed purely by (seed, image index, pair index).
    """
    cfg = config or PipelineConfig()
    in_dir, out_dir = Path(input_dir), Path(output_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory {in_dir} not found")
    files = sorted(p for p in in_dir.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise FileNotFoundError(f"no PNG files under {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(str(p), i, seed, pairs_per_image, cfg.to_json(), str(out_dir))
             for i, p in enumerate(files)]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_generate_for_image, tasks)
    else:
        results = [_generate_for_image(t) for t in tasks]

    total_counts: dict[str, int] = {}
    pair_total = 0
    skipped = []
    for r in results:
        pair_total += r["pairs"]
        if r["skipped"]:
            skipped.append(r["image"])
        for k, v in r["stage_counts"].items():
            total_counts[k] = total_counts.get(k, 0) + v
    freq = {k: v / pair_total for k, v in sorted(total_counts.items())} if pair_total else {}
    return {"images": len(files), "skipped": skipped, "pairs": pair_total,
            "stage_counts": total_counts, "stages_per_pair": freq}
