"""Row-norm sampling for the product of the softmax matrix with ``V``.

``S`` is an ``m x n`` matrix whose r-th row is ``w_r e_{l_r}``; the product
``D~^{-1} A S^T S V`` only touches the ``m`` sampled key/value rows, so the
n x n attention matrix is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import check_exponents


@dataclass(frozen=True)
class RowNormSampler:
    indices: np.ndarray
    weights: np.ndarray

    @property
    def m(self) -> int:
        return int(self.indices.size)

    def to_dense(self, n: int) -> np.ndarray:
        """The ``m x n`` matrix ``S`` (tests only)."""
        s = np.zeros((self.m, n))
        s[np.arange(self.m), self.indices] = self.weights
        return s


def row_norm_probabilities(v: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", v, v)
    total = sq.sum()
    if total == 0.0:
        raise ValueError("cannot sample rows of an all-zero matrix")
    return sq / total


def build_sampler(
    v: np.ndarray,
    m: int,
    seed=0,
    injected_indices: Optional[np.ndarray] = None,
) -> RowNormSampler:
    """Draw ``m`` rows of ``v`` i.i.d. with probability proportional to squared norm.

    With ``injected_indices`` the rows are taken as given and treated as a
    uniform sample, so every weight is ``sqrt(n / m)``.
    """
    n = v.shape[0]
    if injected_indices is not None:
        idx = np.asarray(injected_indices, dtype=np.int64)
        weights = np.full(idx.size, np.sqrt(n / idx.size))
        return RowNormSampler(idx, weights)
    if m < 1:
        raise ValueError("m must be >= 1")
    probs = row_norm_probabilities(v)
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    rng = np.random.default_rng(seed)
    idx = np.searchsorted(cdf, rng.random(m), side="right")
    # Zero-probability rows sit on flat stretches of the CDF and are skipped by
    # side="right"; the clip guards against u landing exactly on 1.0.
    idx = np.minimum(idx, n - 1)
    fro = np.sqrt(np.einsum("ij,ij->", v, v))
    weights = fro / (np.sqrt(m) * np.linalg.norm(v[idx], axis=1))
    return RowNormSampler(idx, weights)


def apply_sampled_attention(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    d_tilde: np.ndarray,
    sampler: RowNormSampler,
    shift: float = 0.0,
) -> np.ndarray:
    """``D~^{-1} A S^T (S V)`` in O(n m d)."""
    idx, w = sampler.indices, sampler.weights
    logits = q @ k[idx].T
    logits -= shift
    check_exponents(logits, None, idx)
    a_s = np.exp(logits, out=logits)
    a_s *= w**2
    a_s /= d_tilde[:, None]
    return a_s @ v[idx]


def sampled_product_numerator(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, sampler: RowNormSampler, shift: float = 0.0
) -> np.ndarray:
    """``A S^T S V`` without the row normalisation."""
    return apply_sampled_attention(q, k, v, np.ones(q.shape[0]), sampler, shift)
