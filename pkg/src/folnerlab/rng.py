"""Seeding rules and a counter-based bit stream.

Bernoulli coordinates are produced by hashing ``(seed, index)`` with the
SplitMix64 finalizer, so the value at any coordinate is available without
generating its predecessors and a shift is just an index offset.
Sequential samplers (Poisson processes, random targets) use numpy
generators seeded through ``SeedSequence`` with an explicit spawn key.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
# odd multipliers decorrelating the coordinates of Z^d indices
_AXIS = [np.uint64(0xD1B54A32D192ED03), np.uint64(0xAEF17502108EF2D9), np.uint64(0xDB4F0B9175AE2165)]


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash64(seed: int, index: np.ndarray) -> np.ndarray:
    """64-bit hash of ``(seed, index)``; ``index`` is ``(n,)`` or ``(n, d)`` int64."""
    index = np.asarray(index, dtype=np.int64)
    if index.ndim == 1:
        index = index[:, None]
    with np.errstate(over="ignore"):
        key = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN)[0]
        z = np.full(len(index), key, dtype=np.uint64)
        for j in range(index.shape[1]):
            col = index[:, j].view(np.uint64)
            z = _mix(z + (col + np.uint64(1)) * _GOLDEN * _AXIS[j % len(_AXIS)])
    return z


def signs(seed: int, index: np.ndarray) -> np.ndarray:
    """Independent fair ±1 values (float64) indexed by group coordinates."""
    bits = hash64(seed, index) >> np.uint64(63)
    return bits.astype(np.float64) * 2.0 - 1.0


def uniforms(seed: int, index: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) doubles indexed by coordinates (53 high bits)."""
    return (hash64(seed, index) >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)


def stream(master_seed: int, *path: int) -> np.random.Generator:
    """Generator for the sub-stream ``path`` (e.g. ``(trial, scale)``) of ``master_seed``.

    Streams for distinct paths are statistically independent, and each
    stream depends only on ``(master_seed, path)``.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))
