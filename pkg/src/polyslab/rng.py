"""Counter-based random streams.

Every stochastic quantity draws from its own Philox stream keyed by the run
seed and a tuple of stream labels, so results never depend on call order or
on the number of worker threads.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def stream(seed: int, *labels) -> np.random.Generator:
    """Independent Philox generator for ``(seed, *labels)``."""
    seq = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                 spawn_key=tuple(_label(p) for p in labels))
    return np.random.Generator(np.random.Philox(seq))
