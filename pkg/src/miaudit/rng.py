"""Seeded, counter-based random streams.

Every stochastic operation draws from ``stream(seed, *key)``: a Philox
generator keyed by the global seed plus a stream id. Stream ids may mix ints
and short strings; strings are mapped to stable 32-bit ints.
"""
import zlib

import numpy as np


def _key_part(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    k = int(k)
    if k < 0:
        raise ValueError("stream ids must be non-negative")
    return k


def stream(seed, *key):
    """Independent generator for ``(seed, key...)``; identical inputs give identical draws."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *key):
    """A 63-bit integer seed derived from ``(seed, key...)``."""
    return int(stream(seed, "derive", *key).integers(0, 2**63 - 1))
