"""Deterministic RNG streams derived from (seed, purpose, indices) keys."""

from __future__ import annotations

from zlib import crc32

import numpy as np


def _as_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return int(key)
    if isinstance(key, str):
        return crc32(key.encode("utf-8"))
    raise TypeError(f"stream key must be int or str, got {type(key).__name__}")


def stream(*keys) -> np.random.Generator:
    """Independent generator for a given key tuple.

    Same keys always give the same stream; distinct key tuples give
    statistically independent streams (SeedSequence guarantees).
    """
    if not keys:
        raise ValueError("at least one stream key is required")
    return np.random.default_rng(np.random.SeedSequence([_as_int(k) for k in keys]))
