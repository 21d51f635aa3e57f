"""Dense float64 kernels and a portable seeded PRNG.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64
(row-major). The helpers here add the shape checks the rest of the package
relies on; everything else uses numpy directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class ShapeError(ValueError):
    """Raised when array dimensions do not line up."""


def as_matrix(data) -> np.ndarray:
    a = np.array(data, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {a.ndim}-D")
    return a


def as_vector(data) -> np.ndarray:
    x = np.array(data, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got {x.ndim}-D")
    return x


def mat_vec_mul(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Return ``a @ x`` after checking ``a.cols == len(x)``."""
    if a.ndim != 2 or x.ndim != 1:
        raise ShapeError(f"mat_vec_mul expects (2-D, 1-D), got ({a.ndim}-D, {x.ndim}-D)")
    if a.shape[1] != x.shape[0]:
        raise ShapeError(
            f"mat_vec_mul: matrix has {a.shape[1]} columns but vector has length {x.shape[0]}"
        )
    return a @ x


def mat_transpose(a: np.ndarray) -> np.ndarray:
    if a.ndim != 2:
        raise ShapeError(f"mat_transpose expects a 2-D matrix, got {a.ndim}-D")
    return np.ascontiguousarray(a.T)


# --- PRNG -----------------------------------------------------------------
#
# SplitMix64 (Steele, Lea & Flood 2014). Pure integer arithmetic modulo 2**64,
# so the output stream is identical on every platform and Python build.


@dataclass(frozen=True)
class RngState:
    seed: int
    counter: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


def _splitmix64(seed: int, counter: int) -> int:
    z = (seed + (counter + 1) * _GOLDEN_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def rng_next_u64(state: RngState) -> tuple[int, RngState]:
    value = _splitmix64(state.seed, state.counter)
    return value, RngState(state.seed, state.counter + 1)


def rng_uniform(state: RngState, lo: float, hi: float) -> tuple[float, RngState]:
    """Draw from [lo, hi) and return the value together with the advanced state."""
    if not lo < hi:
        raise ValueError(f"invalid range: lo={lo!r} must be < hi={hi!r}")
    bits, state = rng_next_u64(state)
    u = (bits >> 11) * 2.0**-53
    value = lo + (hi - lo) * u
    # rounding in lo + (hi - lo) * u can land exactly on hi
    if value >= hi:
        value = math.nextafter(hi, lo)
    return value, state


def rng_uniform_array(
    state: RngState, lo: float, hi: float, shape
) -> tuple[np.ndarray, RngState]:
    """Fill an array of ``shape`` with draws in row-major order."""
    size = int(np.prod(shape, dtype=np.int64))
    out = np.empty(size, dtype=np.float64)
    for i in range(size):
        out[i], state = rng_uniform(state, lo, hi)
    return out.reshape(shape), state
