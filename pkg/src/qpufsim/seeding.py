"""Deterministic seed derivation. All randomness in the package flows through here."""

from __future__ import annotations

import hashlib

import numpy as np


def hash64(*parts) -> int:
    """Stable 64-bit hash of a tuple of ints/strings (independent of PYTHONHASHSEED)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        token = f"{type(p).__name__}:{p}".encode()
        h.update(len(token).to_bytes(4, "little"))
        h.update(token)
    return int.from_bytes(h.digest(), "little")


def rng(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(hash64(*parts)))


def instance_seed(master_seed: int, index: int) -> int:
    return hash64(int(master_seed), "inst", int(index))


def challenge_seed(master_seed: int) -> int:
    return hash64(int(master_seed), "chal")


def shot_seed(instance_seed_: int, challenge: str, round_index: int) -> int:
    return hash64(int(instance_seed_), str(challenge), int(round_index))
