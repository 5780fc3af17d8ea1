"""
Named random sub-streams derived from one run seed
"""
import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """
    Get an independent generator for a named purpose ("init", "shuffle", ...)

    The same (seed, name) pair always yields the same stream, and different
    names never share state.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode('utf-8'))]))
