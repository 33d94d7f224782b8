"""Named, seedable, counter-based random streams.

Every source of randomness in a run (weight init, batch order, latent noise,
metric subsampling, ...) gets its own stream derived from the run seed and a
stream name, so the streams can be reproduced independently of each other.
Per-iteration streams are keyed by ``(seed, name, index)``; resuming a run at
iteration t regenerates exactly the draws an uninterrupted run would make.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "name_key"]


def name_key(name: str) -> int:
    """Stable 64-bit key for a stream name (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Return the generator for stream ``name`` at position ``index``.

    Same (seed, name, index) always yields the same draw sequence; distinct
    names or indices yield statistically independent streams.
    """
    seq = np.random.SeedSequence(entropy=[int(seed), name_key(name), int(index)])
    return np.random.Generator(np.random.Philox(seq))
