"""Near-linear approximate attention with spectral error guarantees."""

from .approx_d import ApproxDParams, RowSumEstimate, approx_d, estimate_row_sums
from .core import AttentionInputs, AttentionOverflowError, ConvergenceWarning, exact_attention, operator_norm
from .heavy_sketch import SketchParams, sketch_heavy_mask
from .hyper import HyperParams, causal_approx_d, causal_hyper_attention, hyper_attention
from .lsh import LshParams, sort_lsh_mask
from .masks import BlockPermMask, SparseMask
from .sampler import RowNormSampler, build_sampler

__all__ = [
    "ApproxDParams",
    "AttentionInputs",
    "AttentionOverflowError",
    "BlockPermMask",
    "ConvergenceWarning",
    "HyperParams",
    "LshParams",
    "RowNormSampler",
    "RowSumEstimate",
    "SketchParams",
    "SparseMask",
    "approx_d",
    "build_sampler",
    "causal_approx_d",
    "causal_hyper_attention",
    "estimate_row_sums",
    "exact_attention",
    "hyper_attention",
    "operator_norm",
    "sketch_heavy_mask",
    "sort_lsh_mask",
]
