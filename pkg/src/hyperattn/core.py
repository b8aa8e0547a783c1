"""Dense reference quantities: exact attention, row sums and spectral norms.

Everything here is quadratic in the sequence length and exists as the oracle
that the near-linear path is checked against.  Matrices are plain float64
``np.ndarray`` objects.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# exp(709.78) is the largest finite float64 exponential.
EXP_LIMIT = 700.0


class AttentionOverflowError(OverflowError):
    """An exponent exceeded ``EXP_LIMIT``; retry with a larger global shift."""

    def __init__(self, row: int, col: int, value: float):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(
            f"exp argument {value:.4g} > {EXP_LIMIT} at entry ({row}, {col}); "
            "re-run with a larger shift"
        )


class ConvergenceWarning(UserWarning):
    pass


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class AttentionInputs:
    """The (Q, K, V) triple, each n x d."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q = as_matrix(self.q, "q")
        k = as_matrix(self.k, "k")
        v = as_matrix(self.v, "v")
        if not (q.shape == k.shape == v.shape):
            raise ValueError(
                f"q, k, v must share shape, got {q.shape}, {k.shape}, {v.shape}"
            )
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def d(self) -> int:
        return self.q.shape[1]


def _global_index(local: int, index) -> int:
    if index is None:
        return local
    if np.isscalar(index):
        return int(index) + local
    return int(np.asarray(index)[local])


def check_exponents(logits: np.ndarray, rows=None, cols=None) -> None:
    """Raise ``AttentionOverflowError`` if any exponent is above the limit.

    ``rows`` / ``cols`` map local positions of a 2-D block to global indices:
    either an index array or an integer offset.
    """
    if logits.size == 0:
        return
    flat = int(np.argmax(logits))
    i, j = np.unravel_index(flat, logits.shape)
    top = logits[i, j]
    if top > EXP_LIMIT:
        raise AttentionOverflowError(_global_index(i, rows), _global_index(j, cols), float(top))


def exact_attention_matrix(q: np.ndarray, k: np.ndarray, shift: float = 0.0) -> np.ndarray:
    """Return ``exp(Q K^T - shift)`` densely."""
    logits = q @ k.T
    logits -= shift
    check_exponents(logits)
    return np.exp(logits, out=logits)


def exact_row_sums(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float64).sum(axis=1)


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def softmax_matrix(q: np.ndarray, k: np.ndarray, causal: bool = False) -> np.ndarray:
    """Row-normalised attention ``D^{-1} A`` (optionally causal), stabilised per row."""
    logits = q @ k.T
    if causal:
        logits[~causal_mask(logits.shape[0])] = -np.inf
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    return logits


def exact_attention(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, causal: bool = False
) -> np.ndarray:
    """Exact ``D^{-1} A V`` (or its causal version).

    Per-row max subtraction keeps the exponentials finite; it does not change
    the result since each row is normalised afterwards.
    """
    return softmax_matrix(q, k, causal) @ v


def exact_causal_row_sums(q: np.ndarray, k: np.ndarray, shift: float = 0.0) -> np.ndarray:
    """``<M^C_i, A_i>`` for every row, with the global shift applied."""
    logits = q @ k.T - shift
    logits[~causal_mask(logits.shape[0])] = -np.inf
    check_exponents(logits)
    return np.exp(logits).sum(axis=1)


def operator_norm(
    m: np.ndarray,
    rel_tol: float = 1e-6,
    max_iter: int = 10_000,
    seed: int = 0,
    return_converged: bool = False,
):
    """Largest singular value of ``m`` by power iteration on ``m^T m``.

    Stops once successive estimates agree to ``rel_tol``.  If ``max_iter`` is
    reached first, the last iterate is returned and a ``ConvergenceWarning``
    is issued; ``return_converged=True`` returns ``(sigma, converged)``.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    m = np.asarray(m, dtype=np.float64)
    rows, cols = m.shape
    # Rescale so tiny (subnormal) entries cannot underflow the iterates.
    scale = float(np.abs(m).max(initial=0.0))
    if scale == 0.0:
        return (0.0, True) if return_converged else 0.0
    m = m / scale
    # Iterate in the smaller dimension.
    if rows < cols:
        m = m.T
        rows, cols = cols, rows
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(cols)
    x /= np.linalg.norm(x)
    sigma = 0.0
    converged = False
    for _ in range(max_iter):
        y = m @ x
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            sigma, converged = 0.0, True
            break
        z = m.T @ y
        z_norm = np.linalg.norm(z)
        # ||M^T M x|| / ||M x|| tends to sigma_max for a unit x.
        new_sigma = z_norm / y_norm
        x = z / z_norm
        if abs(new_sigma - sigma) <= rel_tol * new_sigma:
            sigma, converged = new_sigma, True
            break
        sigma = new_sigma
    if not converged:
        warnings.warn(
            f"power iteration did not reach rel_tol={rel_tol} in {max_iter} steps",
            ConvergenceWarning,
            stacklevel=2,
        )
    sigma *= scale
    if return_converged:
        return float(sigma), converged
    return float(sigma)


def stable_rank(m: np.ndarray, rel_tol: float = 1e-6, seed: int = 0) -> float:
    """``||m||_F^2 / ||m||_op^2``."""
    sigma = operator_norm(m, rel_tol=rel_tol, seed=seed)
    if sigma == 0.0:
        raise ValueError("stable rank of a zero matrix is undefined")
    return float(np.sum(np.square(m)) / sigma**2)


def seed_for(seed: int, path: Sequence[int] = ()) -> np.random.SeedSequence:
    """Seed sequence for a node identified by ``path`` under a global seed.

    Derived by hashing, so the stream for a node never depends on the order in
    which other nodes were visited.
    """
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))


def rng_for(seed: int, path: Sequence[int] = ()) -> np.random.Generator:
    return np.random.default_rng(seed_for(seed, path))


def softmax_column_sq_norms(
    q: np.ndarray, k: np.ndarray, causal: bool = False, chunk: int = 1024
) -> np.ndarray:
    """Squared l2 norm of every column of ``D^{-1} A``, without holding n x n."""
    n = q.shape[0]
    out = np.zeros(k.shape[0])
    for start in range(0, n, chunk):
        logits = q[start:start + chunk] @ k.T
        if causal:
            rows = np.arange(start, start + logits.shape[0])[:, None]
            logits[np.arange(k.shape[0])[None, :] > rows] = -np.inf
        logits -= logits.max(axis=1, keepdims=True)
        np.exp(logits, out=logits)
        logits /= logits.sum(axis=1, keepdims=True)
        out += np.einsum("ij,ij->j", logits, logits)
    return out


def derive_seed(seed: int, path: Sequence[int] = ()) -> int:
    """A 63-bit integer seed for ``path`` under ``seed`` (see :func:`seed_for`)."""
    return int(seed_for(seed, path).generate_state(1, np.uint64)[0] >> np.uint64(1))
