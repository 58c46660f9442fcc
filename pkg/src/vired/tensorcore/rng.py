from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, *path: int | str) -> np.random.Generator:
    """Independent Philox (counter-based) stream keyed by ``seed`` and a path.

    ``stream(seed, "init")`` and ``stream(seed, "epoch", 3)`` never overlap, so
    every stochastic consumer gets its own reproducible generator.
    """
    key = [int(seed) & 0xFFFFFFFF]
    for p in path:
        if isinstance(p, str):
            key.append(zlib.crc32(p.encode()))
        else:
            key.append(int(p) & 0xFFFFFFFF)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
