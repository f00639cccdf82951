"""Keyed random streams.

Every stream is derived from a tuple of keys through numpy's ``SeedSequence``
so a replication's randomness depends only on its keys, never on the order
in which work is scheduled.
"""

import hashlib

import numpy as np


def _as_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("integer keys must be non-negative")
        return int(key)
    digest = hashlib.sha256(str(key).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(*keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([_as_int(k) for k in keys])


def rng_for(*keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(*keys)))
