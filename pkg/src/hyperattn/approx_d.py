"""Near-linear estimation of the attention row sums ``D``.

Each row sum is split into the part covered by a heavy-entry mask, which is
computed exactly, and the remainder, which is estimated from a small uniform
sample of key columns.  Two modes are supported:

``theoretical``
    Per-row caps on sampled entries and a lower clamp ``tau / kappa`` driven
    by an estimate ``tau`` of the largest unmasked row sum.
``practical``
    One shared index set, no caps and no clamp.  The same indices are then
    reused for the value-matrix sampler.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import EXP_LIMIT, AttentionOverflowError, check_exponents, softmax_column_sq_norms
from .masks import BlockPermMask, MaskSpec, SparseMask

PRACTICAL = "practical"
THEORETICAL = "theoretical"

_ROW_CHUNK = 512


@dataclass(frozen=True)
class ApproxDParams:
    """Parameters of the row-sum estimator.

    ``kappa``, ``epsilon`` and ``alpha`` are only consulted (and validated) in
    theoretical mode.  ``complete_cover`` replaces the random column sample
    by every column exactly once, which makes the estimator exact; it is a
    testing hook.
    """

    m: int = 256
    mode: str = PRACTICAL
    kappa: float = math.inf
    epsilon: float = 0.5
    alpha: float = math.inf
    cap_multiplier: float = 1.0
    shift: float = 0.0
    seed: int = 0
    fresh_per_row: bool = False
    complete_cover: bool = False

    def __post_init__(self):
        if self.mode not in (PRACTICAL, THEORETICAL):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.cap_multiplier <= 0:
            raise ValueError("cap_multiplier must be positive")
        if self.mode == THEORETICAL:
            if not (self.kappa > 0):
                raise ValueError("kappa must be > 0")
            if not self.epsilon > 1.0 / self.kappa**4:
                raise ValueError("need epsilon > 1 / kappa^4")
            if not self.alpha > self.epsilon**2 * self.kappa:
                raise ValueError("need alpha > epsilon^2 * kappa")

    @property
    def clamp_divisor(self) -> float:
        return self.kappa if self.mode == THEORETICAL else math.inf


@dataclass
class RowSumEstimate:
    masked_part: np.ndarray
    unmasked_estimate: np.ndarray
    tau: float
    final: np.ndarray
    indices: np.ndarray
    sample_set: Optional[np.ndarray] = None
    caps: Optional[np.ndarray] = None


def _exp_checked(logits: np.ndarray, rows=None, cols=None) -> np.ndarray:
    check_exponents(logits, rows, cols)
    return np.exp(logits, out=logits)


def masked_row_sums(
    q: np.ndarray, k: np.ndarray, mask: MaskSpec, shift: float = 0.0
) -> np.ndarray:
    """``<M_i, exp(K q_i - shift)>`` for every query row, in O(d nnz(M))."""
    n_q = q.shape[0]
    if mask.shape != (n_q, k.shape[0]):
        raise ValueError(f"mask shape {mask.shape} does not match ({n_q}, {k.shape[0]})")
    out = np.zeros(n_q)
    if isinstance(mask, BlockPermMask):
        b = mask.block_size
        n_full = min(mask.shape) // b
        if n_full:
            # Blocks where both sides are full: one batched product.
            rows = mask.order_q[: n_full * b]
            cols = mask.order_k[: n_full * b]
            qs = q[rows].reshape(n_full, b, -1)
            ks = k[cols].reshape(n_full, b, -1)
            logits = qs @ ks.transpose(0, 2, 1)
            logits -= shift
            if logits.max() > EXP_LIMIT:
                blk, i, j = np.unravel_index(int(np.argmax(logits)), logits.shape)
                raise AttentionOverflowError(
                    int(rows[blk * b + i]), int(cols[blk * b + j]), float(logits[blk, i, j])
                )
            out[rows] = np.exp(logits).sum(axis=2).ravel()
        for start in range(n_full * b, max(mask.shape), b):
            rows = mask.order_q[start:start + b]
            cols = mask.order_k[start:start + b]
            if rows.size == 0 or cols.size == 0:
                continue
            logits = q[rows] @ k[cols].T - shift
            out[rows] = _exp_checked(logits, rows, cols).sum(axis=1)
        return out
    if isinstance(mask, SparseMask):
        if mask.nnz == 0:
            return out
        logits = np.einsum("ij,ij->i", q[mask.rows], k[mask.cols]) - shift
        if logits.size and logits.max() > EXP_LIMIT:
            t = int(np.argmax(logits))
            raise AttentionOverflowError(int(mask.rows[t]), int(mask.cols[t]), float(logits[t]))
        return np.bincount(mask.rows, weights=np.exp(logits), minlength=n_q)
    raise TypeError(f"unsupported mask type {type(mask).__name__}")


def unmasked_row_sums(
    q: np.ndarray, k: np.ndarray, mask: MaskSpec, rows: np.ndarray, shift: float = 0.0
) -> np.ndarray:
    """Exact ``<1 - M_j, exp(K q_j - shift)>`` for the selected rows, O(|rows| n d)."""
    rows = np.asarray(rows, dtype=np.int64)
    out = np.empty(rows.size)
    all_cols = np.arange(k.shape[0])
    for start in range(0, rows.size, _ROW_CHUNK):
        sel = rows[start:start + _ROW_CHUNK]
        a = _exp_checked(q[sel] @ k.T - shift, sel)
        a[mask.contains(sel[:, None], all_cols[None, :])] = 0.0
        out[start:start + sel.size] = a.sum(axis=1)
    return out


def estimate_tau(
    q: np.ndarray,
    k: np.ndarray,
    mask: MaskSpec,
    m: int,
    shift: float = 0.0,
    seed=0,
) -> tuple[float, np.ndarray]:
    """Largest unmasked row sum over ``m`` rows drawn without replacement."""
    n = q.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    sample = np.sort(rng.choice(n, size=m, replace=False))
    return float(unmasked_row_sums(q, k, mask, sample, shift).max()), sample


def _sampled_unmasked(q, k, mask, idx, caps, shift):
    """``sum_j (1 - M[i, idx_j]) min(A[i, idx_j], caps_i)`` with shared ``idx``."""
    out = np.empty(q.shape[0])
    k_s = k[idx]
    for start in range(0, q.shape[0], _ROW_CHUNK):
        stop = start + _ROW_CHUNK
        a = _exp_checked(q[start:stop] @ k_s.T - shift, start, idx)
        if caps is not None:
            np.minimum(a, caps[start:stop, None], out=a)
        rows = np.arange(start, min(stop, q.shape[0]))
        a[mask.contains(rows[:, None], idx[None, :])] = 0.0
        out[start:stop] = a.sum(axis=1)
    return out


def _sampled_unmasked_fresh(q, k, mask, idx, caps, shift):
    """As :func:`_sampled_unmasked` but with an index row per query row."""
    out = np.empty(q.shape[0])
    for start in range(0, q.shape[0], _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, q.shape[0])
        sel = idx[start:stop]
        logits = np.einsum("id,imd->im", q[start:stop], k[sel]) - shift
        a = _exp_checked(logits, start)
        if caps is not None:
            np.minimum(a, caps[start:stop, None], out=a)
        rows = np.arange(start, stop)
        a[mask.contains(rows[:, None], sel)] = 0.0
        out[start:stop] = a.sum(axis=1)
    return out


def sample_indices(n: int, params: ApproxDParams, rng: np.random.Generator, rows: int = 0):
    """Uniform i.i.d. column indices (shape ``(m,)``, or ``(rows, m)`` if fresh)."""
    if params.complete_cover:
        return np.arange(n)
    if params.fresh_per_row:
        return rng.integers(0, n, size=(rows, params.m))
    return rng.integers(0, n, size=params.m)


def estimate_row_sums(
    q: np.ndarray, k: np.ndarray, mask: MaskSpec, params: ApproxDParams
) -> RowSumEstimate:
    """Run the estimator and return every intermediate quantity."""
    n_q, n_k = q.shape[0], k.shape[0]
    rng = np.random.default_rng(params.seed)
    shift = params.shift
    masked = masked_row_sums(q, k, mask, shift)

    tau, sample_set = 0.0, None
    if params.mode == THEORETICAL:
        m_tau = min(params.m, n_q)
        tau, sample_set = estimate_tau(q, k, mask, m_tau, shift, rng)

    idx = sample_indices(n_k, params, rng, rows=n_q)
    m = idx.shape[-1]
    caps = None
    if params.mode == THEORETICAL:
        scale = params.epsilon**2 * m / (n_k * math.log(max(n_k, 2)))
        caps = params.cap_multiplier * scale * (masked + tau / params.kappa)
    if idx.ndim == 2:
        sums = _sampled_unmasked_fresh(q, k, mask, idx, caps, shift)
    else:
        sums = _sampled_unmasked(q, k, mask, idx, caps, shift)
    unmasked = (n_k / m) * sums

    floor = tau / params.clamp_divisor
    final = masked + np.maximum(unmasked, floor)
    if not np.all(final > 0):
        bad = int(np.argmin(final))
        raise FloatingPointError(
            f"row-sum estimate for row {bad} underflowed to {final[bad]}; lower the shift"
        )
    return RowSumEstimate(masked, unmasked, tau, final, idx, sample_set, caps)


def approx_d(q: np.ndarray, k: np.ndarray, mask: MaskSpec, params: ApproxDParams) -> np.ndarray:
    """Estimated row sums ``d~`` (the diagonal of ``D~``)."""
    return estimate_row_sums(q, k, mask, params).final


class KappaAlpha(NamedTuple):
    kappa: float
    alpha: float


def estimate_kappa_alpha(
    q: np.ndarray,
    k: np.ndarray,
    mask: MaskSpec,
    probes: Optional[int] = None,
    seed: int = 0,
    shift: float = 0.0,
) -> KappaAlpha:
    """Probe estimates of the unmasked condition number and column spread.

    ``kappa`` is the max/min ratio of unmasked row sums over ``probes``
    uniformly chosen rows.  ``alpha`` is ``n`` times the largest squared
    column norm of ``D^{-1} A`` over ``probes`` columns, with ``D`` exact.
    Both are quadratic-cost diagnostics.  An undefined ratio (no unmasked
    mass) gives ``nan``; a zero minimum gives ``inf``; both warn.
    """
    n = q.shape[0]
    probes = n if probes is None else probes
    if not 1 <= probes <= n:
        raise ValueError("need 1 <= probes <= n")
    rng = np.random.default_rng(seed)
    rows = np.arange(n) if probes == n else np.sort(rng.choice(n, probes, replace=False))
    sums = unmasked_row_sums(q, k, mask, rows, shift)
    hi, lo = sums.max(), sums.min()
    if hi == 0.0:
        warnings.warn("no unmasked mass in probed rows; kappa undefined", stacklevel=2)
        kappa = math.nan
    elif lo == 0.0:
        warnings.warn("a probed row has zero unmasked mass; kappa infinite", stacklevel=2)
        kappa = math.inf
    else:
        kappa = float(hi / lo)

    col_norms = softmax_column_sq_norms(q, k)
    cols = np.arange(n) if probes == n else rng.choice(n, probes, replace=False)
    alpha = float(n * col_norms[cols].max())
    return KappaAlpha(kappa, alpha)
