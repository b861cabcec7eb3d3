"""Stateless counter-based random numbers.

Every uniform variate is a pure function of ``(key, stream, draw)``, where the
key is derived from a master seed plus an optional path of integers, the stream
is usually the trial number and the draw enumerates the variates a trial uses.
Nothing is carried between calls, so any partition of trials among workers
reproduces exactly the same numbers.

The mixing function is the SplitMix64 finalizer applied twice, which is a
bijection on 64-bit words; for a fixed key and draw index the map from stream
index to output word is therefore injective.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_DRAW_MULT = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 2.0 ** -53


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_key(master_seed: int, *path: int) -> np.uint64:
    """Fold a master seed and a path of non-negative integers into one key."""
    if not 0 <= int(master_seed) <= _MASK:
        raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {master_seed}")
    key = mix64(np.array([int(master_seed)], dtype=np.uint64) + _GOLDEN)
    for p in path:
        if int(p) < 0:
            raise ValueError("key path entries must be non-negative")
        key = mix64(key ^ mix64(np.array([int(p) & _MASK], dtype=np.uint64) * _GOLDEN + _M1))
    return key[0]


def uniforms(key, stream, draw: int) -> np.ndarray:
    """Uniform variates on [0, 1) for every ``(key, stream)`` pair at one draw index.

    ``key`` and ``stream`` broadcast against each other.
    """
    k = np.asarray(key, dtype=np.uint64)
    s = np.asarray(stream, dtype=np.uint64)
    x = mix64(s * _GOLDEN + k)
    d = np.array([draw], dtype=np.uint64) * _DRAW_MULT + (k ^ _M2)
    x = mix64(x ^ (d if d.ndim <= x.ndim else d[0]))
    return (x >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def exponentials(key, stream, draw: int) -> np.ndarray:
    """Unit-mean exponential variates by inversion."""
    return -np.log1p(-uniforms(key, stream, draw))


@dataclass(frozen=True)
class SeedSpec:
    """Identifies one reproducible random stream: a master seed and a trial number."""

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed <= _MASK:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if self.stream_index < 0:
            raise ValueError("stream_index must be non-negative")

    def key(self, *path: int) -> np.uint64:
        return derive_key(self.master_seed, *path)


def fold(key, ids) -> np.ndarray:
    """Derive one sub-key per id from ``key`` (vectorized over ``ids``)."""
    ids = np.asarray(ids, dtype=np.uint64)
    return mix64(np.asarray(key, dtype=np.uint64) ^ mix64(ids * _GOLDEN + _M2))
