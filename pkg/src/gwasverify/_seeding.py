"""Seed derivation shared by every randomized routine.

All randomness is keyed off a root integer seed plus a tuple of labels, so a
given column, split or trial always sees the same stream no matter how many
siblings were drawn before it or in what order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_int(label: object) -> int:
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        return int(label) & _MASK64
    digest = hashlib.blake2b(repr(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, *labels: object) -> int:
    """Fold ``labels`` into ``seed`` and return a fresh 64-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed) & _MASK64).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(repr(label).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def rng_for(seed: int, *labels: object) -> np.random.Generator:
    entropy = [int(seed) & _MASK64] + [_label_int(x) for x in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def commitment(seed: int) -> str:
    """Opaque commitment to a seed (hex digest), safe to publish."""
    return hashlib.sha256(f"gwasverify-seed:{int(seed)}".encode()).hexdigest()
