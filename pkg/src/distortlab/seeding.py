"""Splittable seeds: every sub-seed is a hash of (master, component, index)."""

import hashlib

import numpy as np


def derive_seed(master: int, component: str, *index: int) -> int:
    key = ":".join([str(int(master)), component, *(str(int(i)) for i in index)])
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_rng(master: int, component: str, *index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, component, *index))
