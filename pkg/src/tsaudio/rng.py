"""Deterministic, independently keyed random streams.

Every stochastic draw in the package comes from a generator keyed by
(seed, *stream ids). Identical keys reproduce identical draws, and streams
with different keys are statistically independent, so augmentation for one
clip/step never depends on scheduling order. String ids are hashed to stable
integers so call sites can use readable purpose tags.
"""

from __future__ import annotations

import zlib

import numpy as np


def _as_key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def stream(seed: int, *ids: int | str) -> np.random.Generator:
    """Generator for the stream keyed by (seed, *ids)."""
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(_as_key(i) for i in ids))
    return np.random.Generator(np.random.PCG64(ss))
