"""trainbridge: iterate deterministic (noisy, clean) training pairs produced
by the noisemill engine, with manifest-based bit-exact replay."""

from .bridge import PipelineHandle, next_pair, open_pipeline, replay_pair

__all__ = ["PipelineHandle", "open_pipeline", "next_pair", "replay_pair"]
