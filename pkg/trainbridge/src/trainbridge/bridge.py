"""Thin adapter between the pair-synthesis engine and training loops.

The bridge holds no degradation logic: every numeric result comes from the
engine's public pair computation, addressed purely by (seed, image index,
pair index), so the pair at any cursor is bit-identical to what the engine's
CLI writes for the same seed and config.  Handles are single-consumer
iterators; parallel loaders should each open their own handle and partition
cursors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from noisemill.degrade import (
    PipelineConfig, compute_pair, load_hq, plan_to_manifest, replay,
)
from noisemill.imgcore import load_png


class BridgeError(RuntimeError):
    pass


@dataclass
class PipelineHandle:
    """Cursor over every (image, pair) cell of a configured generation run."""

    config: PipelineConfig
    master_seed: int
    files: tuple[Path, ...]
    cursor: tuple[int, int] = (0, 0)
    _usable: dict = field(default_factory=dict, repr=False)

    def _image_usable(self, index: int) -> bool:
        if index not in self._usable:
            self._usable[index] = load_hq(self.files[index],
                                          self.config.hq_size) is not None
        return self._usable[index]

    def _advance_to_usable(self) -> None:
        i, _ = self.cursor
        while i < len(self.files) and not self._image_usable(i):
            i += 1
            self.cursor = (i, 0)

    def __iter__(self):
        return self

    def __next__(self):
        return next_pair(self)


def open_pipeline(config_path, seed: int,
                  input_dir=None) -> PipelineHandle:
    """Open a handle at cursor (0, 0) for the given engine config and seed.

    input_dir overrides the config's input_dir, mirroring the CLI flag.
    """
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        raise BridgeError(f"cannot read config {config_path}: {exc}") from exc
    config = PipelineConfig.from_json(text)  # engine diagnostics verbatim
    hq_dir = Path(input_dir) if input_dir else (
        Path(config.input_dir) if config.input_dir else None)
    if hq_dir is None:
        raise BridgeError("config has no input_dir and none was given")
    if not hq_dir.is_dir():
        raise BridgeError(f"HQ directory {hq_dir} not readable")
    files = tuple(sorted(p for p in hq_dir.iterdir()
                         if p.suffix.lower() == ".png"))
    if not files:
        raise BridgeError(f"no PNG files under {hq_dir}")
    return PipelineHandle(config=config, master_seed=seed, files=files)


def next_pair(handle: PipelineHandle):
    """(noisy, clean, manifest_text) at the cursor; advances the cursor.

    Arrays are float32, channel-first (3, patch, patch), values in [0, 1].
    Raises StopIteration once every (image, pair) cell is consumed.
    """
    handle._advance_to_usable()
    i, k = handle.cursor
    if i >= len(handle.files):
        raise StopIteration
    sample = compute_pair(handle.files[i], i, k, handle.master_seed,
                          handle.config)
    k += 1
    if k >= handle.config.pairs_per_image:
        handle.cursor = (i + 1, 0)
    else:
        handle.cursor = (i, k)
    noisy = np.asarray(sample.noisy.data)
    clean = np.asarray(sample.clean.data)
    return noisy, clean, plan_to_manifest(sample.plan)


def replay_pair(hq_path, manifest_text: str):
    """Re-execute a manifest against its source image, bit-identically."""
    pair = replay(load_png(hq_path), manifest_text)
    return np.asarray(pair.noisy.data), np.asarray(pair.clean.data)
