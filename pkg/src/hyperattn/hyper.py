"""Approximate attention without forming the n x n matrix, with and without causal masking.

The non-causal path estimates the row sums with :mod:`.approx_d` and then
forms ``D~^{-1} A S^T S V`` from a small set of sampled key/value rows.  The
causal path splits the causally masked matrix into two causal diagonal
blocks and one unmasked lower-left block, recursing on the former and using
the non-causal estimators on the latter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .approx_d import PRACTICAL, THEORETICAL, ApproxDParams, RowSumEstimate, estimate_row_sums
from .core import AttentionInputs, check_exponents, derive_seed
from .lsh import LshParams, sort_lsh_mask
from .masks import MaskSpec, empty_mask
from .sampler import RowNormSampler, apply_sampled_attention, build_sampler

# Seed-path labels for the random pieces of one node.
_MASK, _ROWSUM, _SAMPLER = 0, 1, 2
# Child labels in the causal recursion.
_TOP, _BOTTOM, _OFFDIAG = 0, 1, 2

# Headroom kept below EXP_LIMIT by the "auto" shift policy.
_AUTO_SHIFT_CEILING = 600.0


@dataclass(frozen=True)
class HyperParams:
    """Settings for :func:`hyper_attention` and :func:`causal_hyper_attention`.

    ``mask`` selects how a heavy-entry mask is built when none is passed in
    (and for every off-diagonal block of the causal recursion): ``"sortlsh"``
    or ``"none"``.  ``shift`` is a float or ``"auto"``, which subtracts
    ``max(0, max|q| max|k| - 600)`` so that no exponent can overflow.
    """

    block_size: int = 256
    m: int = 256
    mode: str = PRACTICAL
    epsilon: float = 0.5
    kappa: float = math.inf
    alpha: float = math.inf
    cap_multiplier: float = 1.0
    causal_base_threshold: int = 4096
    shift: Union[float, str] = "auto"
    seed: int = 0
    lsh_bits: Optional[int] = None
    mask: str = "sortlsh"
    complete_cover: bool = False

    def __post_init__(self):
        if self.block_size < 1 or self.m < 1:
            raise ValueError("block_size and m must be >= 1")
        if self.causal_base_threshold < 1:
            raise ValueError("causal_base_threshold must be >= 1")
        if self.mask not in ("sortlsh", "none"):
            raise ValueError(f"unknown mask policy {self.mask!r}")
        if self.mode not in (PRACTICAL, THEORETICAL):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (isinstance(self.shift, (int, float)) or self.shift == "auto"):
            raise ValueError("shift must be a number or 'auto'")

    def approx_d_params(self, n_keys: int, shift: float, seed: int) -> ApproxDParams:
        return ApproxDParams(
            m=min(self.m, n_keys) if self.mode == THEORETICAL else self.m,
            mode=self.mode,
            kappa=self.kappa,
            epsilon=self.epsilon,
            alpha=self.alpha,
            cap_multiplier=self.cap_multiplier,
            shift=shift,
            seed=seed,
            complete_cover=self.complete_cover,
        )

    def lsh_params(self, n: int, seed: int) -> LshParams:
        if self.lsh_bits is None:
            return LshParams.for_length(n, seed)
        return LshParams(self.lsh_bits, seed)


@dataclass
class HyperOutput:
    d_tilde: np.ndarray
    sampler: RowNormSampler
    attention: np.ndarray
    mask_used: MaskSpec
    shift: float = 0.0
    row_sums: Optional[RowSumEstimate] = field(default=None, repr=False)


def resolve_shift(q: np.ndarray, k: np.ndarray, policy: Union[float, str]) -> float:
    if policy != "auto":
        return float(policy)
    bound = float(np.linalg.norm(q, axis=1).max(initial=0.0) * np.linalg.norm(k, axis=1).max(initial=0.0))
    return max(0.0, bound - _AUTO_SHIFT_CEILING)


def build_mask(q: np.ndarray, k: np.ndarray, params: HyperParams, seed: int) -> MaskSpec:
    if params.mask == "none":
        return empty_mask(q.shape[0], k.shape[0])
    b = min(params.block_size, max(q.shape[0], k.shape[0]))
    return sort_lsh_mask(q, k, b, params.lsh_params(max(q.shape[0], k.shape[0]), seed))


def _approximate_block(q, k, v, mask, params, shift, seed):
    """Row-sum estimate, sampler and unnormalised numerator for one block."""
    if mask is None:
        mask = build_mask(q, k, params, derive_seed(seed, (_MASK,)))
    est = estimate_row_sums(q, k, mask, params.approx_d_params(k.shape[0], shift, derive_seed(seed, (_ROWSUM,))))
    if params.mode == PRACTICAL:
        sampler = build_sampler(v, est.indices.size, injected_indices=est.indices)
    else:
        sampler = build_sampler(v, params.m, seed=derive_seed(seed, (_SAMPLER,)))
    numerator = apply_sampled_attention(q, k, v, np.ones(q.shape[0]), sampler, shift)
    return est, sampler, numerator, mask


def hyper_attention(
    inputs: AttentionInputs, mask: Optional[MaskSpec] = None, params: HyperParams = HyperParams()
) -> HyperOutput:
    """Approximate ``D^{-1} A V`` as ``D~^{-1} A S^T S V``.

    If ``mask`` is ``None`` one is built according to ``params.mask``.  In
    practical mode the column indices drawn for the row sums are reused as a
    uniform sample for the value product.
    """
    q, k, v = inputs.q, inputs.k, inputs.v
    shift = resolve_shift(q, k, params.shift)
    est, sampler, numerator, mask = _approximate_block(q, k, v, mask, params, shift, params.seed)
    attention = numerator / est.final[:, None]
    return HyperOutput(est.final, sampler, attention, mask, shift, est)


@dataclass
class CausalOutput:
    d_tilde: np.ndarray
    attention: np.ndarray
    shift: float
    offdiag_calls: list = field(default_factory=list, repr=False)


def _exact_causal_block(q, k, v, shift, row_offset):
    logits = q @ k.T
    logits -= shift
    logits[np.triu_indices(q.shape[0], 1)] = -np.inf
    check_exponents(logits, row_offset, row_offset)
    a = np.exp(logits, out=logits)
    sums = a.sum(axis=1)
    return sums, (a @ v if v is not None else None)


def _causal(q, k, v, params, shift, path, offset, trace):
    n = q.shape[0]
    if n <= params.causal_base_threshold:
        return _exact_causal_block(q, k, v, shift, offset)
    h = -(-n // 2)
    top_sums, top_num = _causal(q[:h], k[:h], None if v is None else v[:h], params, shift, path + (_TOP,), offset, trace)
    bot_sums, bot_num = _causal(q[h:], k[h:], None if v is None else v[h:], params, shift, path + (_BOTTOM,), offset + h, trace)

    off_seed = derive_seed(params.seed, path + (_OFFDIAG,))
    q2, k1 = q[h:], k[:h]
    if trace is not None:
        trace.append((path, q2.shape[0], k1.shape[0]))
    if v is None:
        mask = build_mask(q2, k1, params, derive_seed(off_seed, (_MASK,)))
        ad = params.approx_d_params(k1.shape[0], shift, derive_seed(off_seed, (_ROWSUM,)))
        off_sums = estimate_row_sums(q2, k1, mask, ad).final
        off_num = None
    else:
        est, _, off_num, _ = _approximate_block(q2, k1, v[:h], None, params, shift, off_seed)
        off_sums = est.final

    sums = np.concatenate([top_sums, bot_sums + off_sums])
    num = None if v is None else np.concatenate([top_num, bot_num + off_num])
    return sums, num


def causal_approx_d(
    q: np.ndarray, k: np.ndarray, params: HyperParams = HyperParams(), trace: Optional[list] = None
) -> np.ndarray:
    """Estimate the causal row sums ``<M^C_i, A_i>`` recursively.

    Blocks of at most ``params.causal_base_threshold`` rows are summed
    exactly.  Larger blocks split at ``ceil(n/2)``; the lower-left rectangle
    goes to the unmasked estimator.  ``trace``, if given, collects one
    ``(path, rows, cols)`` tuple per unmasked estimator call.
    """
    shift = resolve_shift(q, k, params.shift)
    sums, _ = _causal(np.asarray(q, float), np.asarray(k, float), None, params, shift, (), 0, trace)
    return sums


def causal_hyper_attention(inputs: AttentionInputs, params: HyperParams = HyperParams()) -> CausalOutput:
    """Approximate causal attention ``D_C^{-1} (M^C * A) V``.

    The numerator follows the same recursion as the row sums: diagonal base
    blocks exactly, and every lower-left block through a sampler on the
    matching slice of ``V``.
    """
    q, k, v = inputs.q, inputs.k, inputs.v
    shift = resolve_shift(q, k, params.shift)
    trace: list = []
    sums, num = _causal(q, k, v, params, shift, (), 0, trace)
    return CausalOutput(sums, num / sums[:, None], shift, trace)
