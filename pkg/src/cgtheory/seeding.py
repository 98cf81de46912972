"""Deterministic RNG derivation.

All randomness in the package flows from one integer seed through named
streams, so adding or reordering consumers never silently changes results.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_rng(seed: int, *stream: str | int) -> np.random.Generator:
    """Return a generator for the stream named by ``stream`` under ``seed``.

    String tags are hashed with crc32, which is stable across platforms and
    Python processes (unlike ``hash``).
    """
    keys = [int(seed) & 0xFFFFFFFF]
    for part in stream:
        if isinstance(part, str):
            keys.append(zlib.crc32(part.encode("utf-8")))
        else:
            keys.append(int(part) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(keys))
