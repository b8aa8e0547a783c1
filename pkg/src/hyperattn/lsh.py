"""Hamming-sorted angular LSH and the sorted-LSH block mask.

A point is hashed to ``r`` sign bits against Gaussian hyperplanes.  The bit
pattern is then read as a reflected Gray code, so consecutive bucket indices
(cyclically) hold patterns that differ in exactly one bit.  Two points whose
patterns differ in one sign are therefore likely to land next to each other
after sorting by bucket.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .masks import BlockPermMask

MAX_BITS = 30


@dataclass(frozen=True)
class LshParams:
    r: int
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.r <= MAX_BITS:
            raise ValueError(f"r must be in [1, {MAX_BITS}], got {self.r}")

    @classmethod
    def for_length(cls, n: int, seed: int = 0) -> "LshParams":
        """``r = ceil(log2 n)`` bits, clipped to the valid range."""
        r = math.ceil(math.log2(n)) if n > 1 else 1
        return cls(min(max(r, 1), MAX_BITS), seed)

    def hyperplanes(self, d: int) -> np.ndarray:
        """The ``(r, d)`` Gaussian hyperplanes fixed by ``seed``."""
        return np.random.default_rng(self.seed).standard_normal((self.r, d))


def gray_code(index):
    """Bit pattern stored at bucket ``index``."""
    index = np.asarray(index, dtype=np.int64)
    return index ^ (index >> 1)


def gray_rank(pattern):
    """Inverse of :func:`gray_code`: the bucket holding ``pattern``."""
    out = np.array(pattern, dtype=np.int64, copy=True)
    shift = out >> 1
    while np.any(shift):
        out ^= shift
        shift >>= 1
    return out


def sign_patterns(x: np.ndarray, planes: np.ndarray) -> np.ndarray:
    """Integer bit patterns ``sum_t [<x, g_t> > 0] 2^t`` for each row of ``x``."""
    bits = (np.atleast_2d(x) @ planes.T) > 0
    weights = np.left_shift(np.int64(1), np.arange(planes.shape[0], dtype=np.int64))
    return bits.astype(np.int64) @ weights


def hash_rows(x: np.ndarray, planes: np.ndarray) -> np.ndarray:
    """Bucket index of every row of ``x`` for the given hyperplanes.

    All-zero rows get bucket 0 and trigger a warning.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    zero = ~np.any(x != 0, axis=1)
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero row(s) hashed to bucket 0", stacklevel=2)
    return gray_rank(sign_patterns(x, planes))


def hash_point(x: np.ndarray, params: LshParams) -> int:
    x = np.asarray(x, dtype=np.float64).ravel()
    return int(hash_rows(x[None, :], params.hyperplanes(x.size))[0])


def collision_probability(theta: float, r: int) -> float:
    """Probability two points at angle ``theta`` share a bucket."""
    if not 0.0 <= theta <= math.pi:
        raise ValueError("theta must lie in [0, pi]")
    return (1.0 - theta / math.pi) ** r


def adjacent_bucket_probability(theta: float, r: int) -> float:
    """Probability two points at angle ``theta`` land in buckets ``+-1 mod 2^r``.

    Valid for ``r >= 2``; with one bit both neighbours coincide.
    """
    if not 0.0 <= theta <= math.pi:
        raise ValueError("theta must lie in [0, pi]")
    p = theta / math.pi
    return 2.0 * p * (1.0 - p) ** (r - 1)


def sorted_positions(buckets: np.ndarray) -> np.ndarray:
    """Position of each row after a stable sort by bucket (ties by row index)."""
    order = np.argsort(buckets, kind="stable")
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    return pos


def sort_lsh_mask(q: np.ndarray, k: np.ndarray, block_size: int, params: LshParams) -> BlockPermMask:
    """Sort queries and keys by LSH bucket and keep the diagonal blocks."""
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    if q.shape[1] != k.shape[1]:
        raise ValueError("q and k must have the same number of columns")
    planes = params.hyperplanes(q.shape[1])
    perm_q = sorted_positions(hash_rows(q, planes))
    perm_k = sorted_positions(hash_rows(k, planes))
    return BlockPermMask(perm_q, perm_k, block_size)
