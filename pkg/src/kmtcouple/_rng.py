"""Counter-based uniforms: u = ((z >> 12) + 1/2) 2^-52 with
z = mix(key + (c + 1) * golden) for a 64-bit stream key and a counter c.
52 bits keep every grid point, including the largest, strictly inside
(0, 1) as a double. Keys are derived from a seed and a tuple of
nonnegative integers, so any sample is addressable without replaying a
sequential generator."""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer on Python ints."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_key(seed: int, *parts: int) -> int:
    if seed < 0 or any(p < 0 for p in parts):
        raise ValueError("seed and stream parts must be nonnegative")
    k = mix64(seed ^ GOLDEN)
    for p in parts:
        k = mix64(k + (p + 1) * GOLDEN)
    return k


def uniform_py(key: int, c: int) -> float:
    """Reference scalar version of the kernel uniform (for tests)."""
    z = mix64(key + (c + 1) * GOLDEN)
    return ((z >> 12) + 0.5) * 2.0**-52


def uniforms_np(key, counters) -> np.ndarray:
    """Vectorized uniforms; ``key`` and ``counters`` broadcast together."""
    c = np.asarray(counters, dtype=np.uint64)
    key = np.asarray(key, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = key + (c + np.uint64(1)) * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52


def generator_uniform(rng: np.random.Generator, size=None):
    """Uniforms on the same open grid (k + 1/2) 2^-52 from a numpy Generator."""
    k = rng.integers(0, 1 << 52, size=size, dtype=np.int64)
    return (k + 0.5) * 2.0**-52
