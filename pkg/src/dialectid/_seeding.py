"""Seed derivation: every random stream comes from (seed, run, component tag)."""

import zlib

import numpy as np

DEFAULT_SEED = 20240917


def derive_seed(seed: int, *parts) -> int:
    words = [int(seed) & 0xFFFFFFFF]
    for p in parts:
        if isinstance(p, str):
            words.append(zlib.crc32(p.encode("utf-8")))
        else:
            words.append(int(p) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0] >> 1)


def rng_for(seed: int, *parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *parts))
