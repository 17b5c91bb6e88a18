"""Named, independent random sub-streams derived from one user seed."""

import zlib

import numpy as np


def derive_seed(seed, name: str) -> int:
    """Deterministic 63-bit seed for the sub-stream ``name`` of ``seed``."""
    base = 0 if seed is None else int(seed)
    ss = np.random.SeedSequence(entropy=base, spawn_key=(zlib.crc32(name.encode("utf-8")),))
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1


def rng_for(seed, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, name))
