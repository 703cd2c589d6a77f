"""Counter-based seed fan-out.

Every random consumer derives its stream from ``(master_seed, *keys)`` so the
result never depends on call order or thread count.
"""
import zlib

import numpy as np


def _key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k)


def child_seed(seed, *keys):
    """Deterministic 32-bit seed for the stream named by ``keys``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def child_rng(seed, *keys):
    return np.random.default_rng(child_seed(seed, *keys))
