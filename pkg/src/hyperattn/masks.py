"""Heavy-entry mask representations.

Two shapes of mask are produced in this package: block-diagonal under a pair
of row/column permutations (from sorted LSH) and an explicit sorted list of
entries (from sketching).  Both answer membership queries without building
the n x n matrix; ``to_dense`` exists for tests and small diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np


def _is_permutation(p: np.ndarray, n: int) -> bool:
    if p.shape != (n,):
        return False
    seen = np.zeros(n, dtype=bool)
    if p.size and (p.min() < 0 or p.max() >= n):
        return False
    seen[p] = True
    return bool(seen.all())


@dataclass(frozen=True)
class BlockPermMask:
    """``M[i, j] = 1`` iff ``perm_q[i] // b == perm_k[j] // b``.

    ``perm_q[i]`` is the sorted position of query row ``i``.  When ``b`` does
    not divide ``n`` the final block is short.
    """

    perm_q: np.ndarray
    perm_k: np.ndarray
    block_size: int
    order_q: np.ndarray = field(init=False, repr=False)
    order_k: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        perm_q = np.asarray(self.perm_q, dtype=np.int64)
        perm_k = np.asarray(self.perm_k, dtype=np.int64)
        if not (
            _is_permutation(perm_q, perm_q.shape[0])
            and _is_permutation(perm_k, perm_k.shape[0])
        ):
            raise ValueError("perm_q and perm_k must be permutations")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        object.__setattr__(self, "perm_q", perm_q)
        object.__setattr__(self, "perm_k", perm_k)
        object.__setattr__(self, "order_q", np.argsort(perm_q))
        object.__setattr__(self, "order_k", np.argsort(perm_k))

    @property
    def shape(self) -> tuple[int, int]:
        return self.perm_q.shape[0], self.perm_k.shape[0]

    @property
    def n(self) -> int:
        return self.perm_q.shape[0]

    @property
    def n_blocks(self) -> int:
        return -(-max(self.shape) // self.block_size)

    @property
    def nnz(self) -> int:
        b = self.block_size
        sizes_q = np.bincount(self.perm_q // b, minlength=self.n_blocks)
        sizes_k = np.bincount(self.perm_k // b, minlength=self.n_blocks)
        return int(sizes_q @ sizes_k)

    def block_of_query(self, i) -> np.ndarray:
        return self.perm_q[i] // self.block_size

    def block_of_key(self, j) -> np.ndarray:
        return self.perm_k[j] // self.block_size

    def contains(self, i, j) -> np.ndarray:
        return self.block_of_query(i) == self.block_of_key(j)

    def row_membership(self, cols: np.ndarray) -> np.ndarray:
        """Boolean ``(n, len(cols))`` array of ``M[i, cols[r]]``."""
        return self.block_of_query(np.arange(self.n))[:, None] == self.block_of_key(cols)[None, :]

    def blocks(self):
        """Yield ``(query_rows, key_rows)`` index arrays for each diagonal block."""
        b = self.block_size
        for start in range(0, max(self.shape), b):
            yield self.order_q[start:start + b], self.order_k[start:start + b]

    def to_dense(self) -> np.ndarray:
        return self.row_membership(np.arange(self.shape[1]))


@dataclass(frozen=True)
class SparseMask:
    """Explicit mask entries, strictly sorted by ``(row, col)``.

    The mask is ``n x n_cols``; ``n_cols`` defaults to ``n``.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    n_cols: Optional[int] = None
    keys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_cols is None:
            object.__setattr__(self, "n_cols", self.n)
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise ValueError("rows and cols must have equal length")
        if rows.size and (
            rows.min() < 0 or cols.min() < 0 or rows.max() >= self.n or cols.max() >= self.n_cols
        ):
            raise ValueError("mask entries out of range")
        keys = rows * self.n_cols + cols
        if keys.size > 1 and not np.all(np.diff(keys) > 0):
            raise ValueError("entries must be strictly sorted with no duplicates")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "keys", keys)

    @classmethod
    def from_pairs(cls, n: int, rows, cols, n_cols: Optional[int] = None) -> "SparseMask":
        """Build from unsorted, possibly repeated pairs."""
        width = n if n_cols is None else n_cols
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        keys = np.unique(rows * width + cols)
        return cls(n, keys // width, keys % width, width)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n, self.n_cols

    @property
    def nnz(self) -> int:
        return int(self.keys.size)

    def contains(self, i, j) -> np.ndarray:
        key = np.asarray(i, dtype=np.int64) * self.n_cols + np.asarray(j, dtype=np.int64)
        if self.keys.size == 0:
            return np.zeros(np.shape(key), dtype=bool)
        pos = np.minimum(np.searchsorted(self.keys, key), self.keys.size - 1)
        return self.keys[pos] == key

    def row_membership(self, cols: np.ndarray) -> np.ndarray:
        return self.contains(np.arange(self.n)[:, None], np.asarray(cols)[None, :])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        out[self.rows, self.cols] = True
        return out


MaskSpec = Union[BlockPermMask, SparseMask]


def full_mask(n: int) -> BlockPermMask:
    """All-ones mask (a single block)."""
    ident = np.arange(n)
    return BlockPermMask(ident, ident, max(n, 1))


def empty_mask(n: int, n_cols: Optional[int] = None) -> SparseMask:
    return SparseMask(n, np.empty(0, np.int64), np.empty(0, np.int64), n_cols)


def mask_from_dense(dense: np.ndarray) -> SparseMask:
    rows, cols = np.nonzero(np.asarray(dense, dtype=bool))
    return SparseMask(dense.shape[0], rows, cols, dense.shape[1])
