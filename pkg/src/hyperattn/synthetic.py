"""Synthetic (Q, K, V) generators used by tests, diagnostics and the CLI."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import AttentionInputs

GENERATORS = ("gaussian", "planted", "orthogonal")


def gaussian_inputs(n: int, d: int, seed: int = 0, scale: bool = True) -> AttentionInputs:
    """I.i.d. standard normal Q, K, V; with ``scale`` Q is divided by sqrt(d)."""
    rng = np.random.default_rng(seed)
    q, k, v = rng.standard_normal((3, n, d))
    if scale:
        q /= np.sqrt(d)
    return AttentionInputs(q, k, v)


def orthogonal_inputs(n: int, d: int, seed: int = 0, radius: float = 1.0) -> AttentionInputs:
    """Q and K rows uniform on the sphere of the given radius.

    For moderate d most query/key pairs are close to orthogonal.
    """
    rng = np.random.default_rng(seed)
    q, k, v = rng.standard_normal((3, n, d))
    q *= radius / np.linalg.norm(q, axis=1, keepdims=True)
    k *= radius / np.linalg.norm(k, axis=1, keepdims=True)
    return AttentionInputs(q, k, v)


class PlantedInstance(NamedTuple):
    inputs: AttentionInputs
    heavy_cols: np.ndarray  # heavy_cols[i] is the planted key of query i


def planted_inputs(
    n: int, d: int, seed: int = 0, strength: float = 10.0, noise: float = 0.1
) -> PlantedInstance:
    """One large entry per row of ``Q K^T`` at a random column.

    Keys are random unit vectors; query ``i`` is ``strength`` times the key
    ``heavy_cols[i]`` plus Gaussian noise of norm about ``noise``, so the
    planted inner product is ``strength`` up to the noise.
    """
    rng = np.random.default_rng(seed)
    k = rng.standard_normal((n, d))
    k /= np.linalg.norm(k, axis=1, keepdims=True)
    heavy = rng.permutation(n)
    q = strength * k[heavy] + noise * rng.standard_normal((n, d)) / np.sqrt(d)
    v = rng.standard_normal((n, d))
    return PlantedInstance(AttentionInputs(q, k, v), heavy)


def make_inputs(generator: str, n: int, d: int, seed: int = 0, scale: bool = True) -> AttentionInputs:
    if generator == "gaussian":
        return gaussian_inputs(n, d, seed, scale)
    if generator == "planted":
        return planted_inputs(n, d, seed).inputs
    if generator == "orthogonal":
        return orthogonal_inputs(n, d, seed)
    raise ValueError(f"unknown generator {generator!r}; expected one of {GENERATORS}")
