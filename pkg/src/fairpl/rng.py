"""Deterministic random-stream derivation.

All stochastic code takes a numpy Generator. Sub-streams are derived from a
global seed plus arbitrary keys (query ids, sample indices, ...) through a
stable hash, so runs are reproducible regardless of execution order and
PYTHONHASHSEED.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_hash(*keys) -> int:
    """64-bit hash of the repr of the keys; stable across processes."""
    text = "\x1f".join(repr(k) for k in keys)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Generator for the sub-stream identified by (seed, *keys)."""
    if keys:
        return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, stable_hash(*keys)]))
    return np.random.default_rng(np.random.SeedSequence(seed))


def rand_below(rng: np.random.Generator, n: int) -> int:
    """Uniform integer in [0, n) for arbitrary-precision n.

    Draws 32-bit words until the assembled value falls below n, so the
    result is exactly uniform (no float rounding).
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if n < 1 << 63:
        return int(rng.integers(0, n))
    bits = n.bit_length()
    words = (bits + 31) // 32
    excess = words * 32 - bits
    while True:
        raw = rng.integers(0, 1 << 32, size=words, dtype=np.uint64)
        value = 0
        for w in raw:
            value = (value << 32) | int(w)
        value >>= excess
        if value < n:
            return value
