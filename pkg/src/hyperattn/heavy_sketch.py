"""Heavy-entry mask from a CountSketch of ``Q K^T``.

An entry ``(i, j)`` is heavy when ``(Q K^T)_{ij}^2 >= ||Q K^T e_j||^2 / tau``.
We sketch ``Q`` on the left by a CountSketch ``T`` (``t x n`` with
``t = repetitions * sketch_rows``), then form ``(T Q) K^T``; every column of
that ``t x n`` matrix is a CountSketch of the matching column of ``Q K^T``,
which is never materialised.

Decoding scans every row index per column (quadratic time, but memory stays
at ``O(t n)`` by working on column chunks).  With ``verify=True`` the entries
whose sketched value clears a loose threshold are re-checked exactly: the
entry itself is one length-d inner product, and column energies come from
the ``d x d`` Gram matrix ``Q^T Q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .masks import SparseMask


@dataclass(frozen=True)
class SketchParams:
    """CountSketch settings.

    ``sketch_rows`` defaults to ``8 * ceil(tau)``.  Entries are kept when
    their (estimated or verified) square reaches ``energy / (accept_factor *
    tau)``; with ``verify`` the sketch only nominates candidates at the looser
    ``energy / (candidate_factor * tau)``.
    """

    tau: float
    repetitions: int = 7
    sketch_rows: Optional[int] = None
    seed: int = 0
    verify: bool = True
    accept_factor: float = 1.5
    candidate_factor: float = 4.0

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError("tau must be > 1")
        if self.repetitions < 1 or self.repetitions % 2 == 0:
            raise ValueError("repetitions must be a positive odd number")
        if self.sketch_rows is None:
            object.__setattr__(self, "sketch_rows", 8 * math.ceil(self.tau))
        if self.sketch_rows < 8 * self.tau:
            raise ValueError("sketch_rows must be at least 8 * tau")

    @property
    def total_rows(self) -> int:
        return self.repetitions * self.sketch_rows


@dataclass(frozen=True)
class CountSketch:
    """Bucket and sign of every input index, per repetition."""

    buckets: np.ndarray  # (repetitions, n)
    signs: np.ndarray  # (repetitions, n)
    sketch_rows: int

    @classmethod
    def draw(cls, n: int, params: SketchParams) -> "CountSketch":
        rng = np.random.default_rng(params.seed)
        buckets = rng.integers(0, params.sketch_rows, size=(params.repetitions, n))
        signs = rng.integers(0, 2, size=(params.repetitions, n)) * 2.0 - 1.0
        return cls(buckets, signs, params.sketch_rows)

    @property
    def repetitions(self) -> int:
        return self.buckets.shape[0]

    def matrix(self) -> sp.csr_matrix:
        """The ``t x n`` sketching matrix ``T`` as a sparse matrix."""
        reps, n = self.buckets.shape
        rows = (self.buckets + self.sketch_rows * np.arange(reps)[:, None]).ravel()
        cols = np.tile(np.arange(n), reps)
        return sp.csr_matrix(
            (self.signs.ravel(), (rows, cols)), shape=(reps * self.sketch_rows, n)
        )

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``T x`` for an ``n x d`` array."""
        return np.asarray(self.matrix() @ x)

    def estimate_entries(self, sketch: np.ndarray, cols: slice) -> np.ndarray:
        """Median-of-repetitions estimates of ``x[i, j]`` for all ``i``, ``j in cols``."""
        reps = self.repetitions
        blocks = sketch.reshape(reps, self.sketch_rows, -1)
        per_rep = np.stack(
            [blocks[r][self.buckets[r], cols] * self.signs[r][:, None] for r in range(reps)]
        )
        return np.median(per_rep, axis=0)


def sketch_product(q: np.ndarray, k: np.ndarray, cs: CountSketch) -> np.ndarray:
    """``(T Q) K^T``: a ``t x n`` sketch of every column of ``Q K^T``."""
    return cs.apply(q) @ k.T


def column_energy_estimates(sketch: np.ndarray, params: SketchParams) -> np.ndarray:
    """Median over repetitions of the per-repetition bucket energy of each column."""
    per_rep = sketch.reshape(params.repetitions, params.sketch_rows, -1)
    return np.median(np.einsum("rbj,rbj->rj", per_rep, per_rep), axis=0)


def exact_column_energies(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    """``||Q K^T e_j||^2 = k_j^T (Q^T Q) k_j`` in O(n d^2)."""
    gram = q.T @ q
    return np.einsum("jd,de,je->j", k, gram, k)


def sketch_heavy_mask(q: np.ndarray, k: np.ndarray, params: SketchParams) -> SparseMask:
    """Entries of ``Q K^T`` that are heavy within their column."""
    n = q.shape[0]
    cs = CountSketch.draw(n, params)
    sketch = sketch_product(q, k, cs)
    energy = column_energy_estimates(sketch, params)
    factor = params.candidate_factor if params.verify else params.accept_factor
    exact_energy = exact_column_energies(q, k) if params.verify else None

    rows_out, cols_out = [], []
    chunk = max(1, params.sketch_rows)
    for start in range(0, k.shape[0], chunk):
        cols = slice(start, min(start + chunk, k.shape[0]))
        est = cs.estimate_entries(sketch, cols)
        i, jj = np.nonzero((est**2 >= energy[cols] / (factor * params.tau)) & (est != 0))
        j = jj + start
        if params.verify and i.size:
            vals = np.einsum("id,id->i", q[i], k[j])
            keep = (vals**2 >= exact_energy[j] / (params.accept_factor * params.tau)) & (vals != 0)
            i, j = i[keep], j[keep]
        rows_out.append(i)
        cols_out.append(j)
    rows = np.concatenate(rows_out) if rows_out else np.empty(0, np.int64)
    cols = np.concatenate(cols_out) if cols_out else np.empty(0, np.int64)
    return SparseMask.from_pairs(n, rows, cols, k.shape[0])
