"""Hierarchical random-stream derivation.

Every stochastic component derives its generator from a master seed plus a
named path, so adding one acquisition to a scenario never perturbs the noise
of another. Paths are strings hashed to fixed 64-bit keys; the same
(master_seed, path) pair always yields the same stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _path_key(part: str | int) -> int:
    if isinstance(part, int):
        return part & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(part.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(master_seed: int, *path: str | int) -> np.random.SeedSequence:
    """SeedSequence for a named substream of the master seed."""
    key = tuple(_path_key(p) for p in path)
    return np.random.SeedSequence(master_seed, spawn_key=key)


def substream(master_seed: int, *path: str | int) -> np.random.Generator:
    """Independent Generator for a named substream of the master seed."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, *path)))


def derive_seed(master_seed: int, *path: str | int) -> int:
    """64-bit child seed, for components that keep their own stream state."""
    return int(seed_sequence(master_seed, *path).generate_state(1, np.uint64)[0])
