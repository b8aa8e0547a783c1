"""Spectral-error reports and column-spread (alpha) sweeps.

These run the dense oracle, so they are meant for desk-scale ``n``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np

from .core import AttentionInputs, derive_seed, operator_norm, softmax_matrix
from .hyper import HyperParams, causal_hyper_attention, hyper_attention
from .masks import MaskSpec
from .synthetic import make_inputs


@dataclass
class SpectralReport:
    """Measured attention error against ``epsilon ||D^{-1}A||_op ||V||_op``."""

    err_op: float
    bound: float
    alpha_hat: float
    kappa_hat: float
    srank_hat: float
    passed: bool
    seed: int
    n: int
    d: int
    epsilon: float
    causal: bool = False
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _unmasked_kappa(q: np.ndarray, k: np.ndarray, mask: MaskSpec) -> float:
    logits = q @ k.T
    logits -= logits.max()
    a = np.exp(logits, out=logits)
    a[mask.to_dense()] = 0.0
    sums = a.sum(axis=1)
    if sums.max() == 0.0:
        return math.nan
    if sums.min() == 0.0:
        return math.inf
    return float(sums.max() / sums.min())


def verify_spectral(
    inputs: AttentionInputs,
    mask: Optional[MaskSpec] = None,
    params: HyperParams = HyperParams(),
    epsilon: float = 0.5,
    causal: bool = False,
    rel_tol: float = 1e-6,
) -> SpectralReport:
    """Run the approximation and measure its operator-norm error densely."""
    q, k, v = inputs.q, inputs.k, inputs.v
    softmax = softmax_matrix(q, k, causal)
    exact = softmax @ v
    if causal:
        approx = causal_hyper_attention(inputs, params).attention
        kappa = math.nan
    else:
        out = hyper_attention(inputs, mask, params)
        approx = out.attention
        kappa = _unmasked_kappa(q, k, out.mask_used)

    err = operator_norm(exact - approx, rel_tol=rel_tol)
    softmax_norm = operator_norm(softmax, rel_tol=rel_tol)
    bound = epsilon * softmax_norm * operator_norm(v, rel_tol=rel_tol)
    alpha = inputs.n * float(np.einsum("ij,ij->j", softmax, softmax).max())
    srank = float(np.einsum("ij,ij->", softmax, softmax) / softmax_norm**2)
    return SpectralReport(
        err_op=err,
        bound=bound,
        alpha_hat=alpha,
        kappa_hat=kappa,
        srank_hat=srank,
        passed=bool(err <= bound),
        seed=params.seed,
        n=inputs.n,
        d=inputs.d,
        epsilon=epsilon,
        causal=causal,
        params=asdict(params),
    )


@dataclass
class AlphaRow:
    n: int
    alpha: float
    alpha_over_n: float
    seed: int


def alpha_statistic(q: np.ndarray, k: np.ndarray, exclude_prefix: int = 0) -> float:
    """``n`` times the largest squared column norm of ``D^{-1} A``.

    The first ``exclude_prefix`` columns are left out of the maximum.
    """
    softmax = softmax_matrix(q, k)
    col = np.einsum("ij,ij->j", softmax, softmax)[exclude_prefix:]
    return q.shape[0] * float(col.max())


def alpha_sweep(
    n_grid: Iterable[int],
    d: int,
    seed: int = 0,
    generator: str = "gaussian",
    exclude_prefix: int = 0,
    scale: bool = True,
) -> list[AlphaRow]:
    rows = []
    for n in n_grid:
        point_seed = derive_seed(seed, (n,))
        inputs = make_inputs(generator, n, d, point_seed, scale)
        alpha = alpha_statistic(inputs.q, inputs.k, exclude_prefix)
        rows.append(AlphaRow(n, alpha, alpha / n, point_seed))
    return rows
