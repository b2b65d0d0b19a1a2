"""noisemill: deterministic, replayable synthesis of paired noisy/clean
training patches, plus a forward-only Swin-Conv UNet dataflow verifier."""

from .imgcore import Image, RngStream, clip01, rgb_to_gray, load_png, save_png
from .degrade import (
    DegradationPlan,
    PairSample,
    PipelineConfig,
    execute_plan,
    generate_dataset,
    plan_from_manifest,
    plan_to_manifest,
    replay,
    sample_plan,
)

__all__ = [
    "Image", "RngStream", "clip01", "rgb_to_gray", "load_png", "save_png",
    "DegradationPlan", "PairSample", "PipelineConfig", "execute_plan",
    "generate_dataset", "plan_from_manifest", "plan_to_manifest", "replay",
    "sample_plan",
]
