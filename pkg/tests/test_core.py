import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from hyperattn.core import (
    EXP_LIMIT,
    AttentionInputs,
    AttentionOverflowError,
    ConvergenceWarning,
    check_exponents,
    derive_seed,
    exact_attention,
    exact_attention_matrix,
    exact_causal_row_sums,
    operator_norm,
    softmax_column_sq_norms,
    softmax_matrix,
    stable_rank,
)


def loop_attention(q, k, v, causal=False):
    """Scalar-loop softmax attention, the slowest possible oracle."""
    n = q.shape[0]
    out = np.zeros_like(v)
    for i in range(n):
        cols = range(i + 1) if causal else range(n)
        logits = [sum(q[i, t] * k[j, t] for t in range(q.shape[1])) for j in cols]
        top = max(logits)
        w = [math.exp(x - top) for x in logits]
        z = sum(w)
        for wj, j in zip(w, cols):
            out[i] += wj / z * v[j]
    return out


class TestAttentionInputs:
    def test_shapes_and_dtype(self):
        x = AttentionInputs(np.ones((4, 2), np.float32), np.ones((4, 2)), np.ones((4, 2)))
        assert x.q.dtype == np.float64
        assert (x.n, x.d) == (4, 2)

    @pytest.mark.parametrize(
        "q, k",
        [
            (np.ones((4, 2)), np.ones((5, 2))),
            (np.ones((4, 2)), np.ones((4, 3))),
            (np.ones(4), np.ones(4)),
        ],
    )
    def test_rejects_bad_shapes(self, q, k):
        with pytest.raises(ValueError):
            AttentionInputs(q, k, np.ones_like(k))

    def test_rejects_nan(self):
        q = np.ones((3, 2))
        q[1, 1] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            AttentionInputs(q, np.ones((3, 2)), np.ones((3, 2)))


class TestExactAttention:
    def test_matches_loop_oracle(self, small_inputs):
        x = small_inputs
        assert_allclose(exact_attention(x.q, x.k, x.v), loop_attention(x.q, x.k, x.v), rtol=1e-12, atol=1e-14)

    def test_causal_matches_loop_oracle(self, small_inputs):
        x = small_inputs
        assert_allclose(
            exact_attention(x.q, x.k, x.v, causal=True),
            loop_attention(x.q, x.k, x.v, causal=True),
            rtol=1e-12,
            atol=1e-14,
        )

    def test_softmax_is_row_stochastic(self, small_inputs):
        for causal in (False, True):
            p = softmax_matrix(small_inputs.q, small_inputs.k, causal)
            assert_allclose(p.sum(axis=1), 1.0, rtol=1e-13)
            assert np.all(p >= 0)
        assert np.all(np.triu(p, 1) == 0)

    def test_zero_inputs_give_uniform_rows(self):
        z = np.zeros((5, 3))
        assert_allclose(softmax_matrix(z, z), np.full((5, 5), 0.2))

    def test_large_logits_stay_finite(self):
        q = np.array([[800.0], [-800.0]])
        k = np.array([[1.0], [0.5]])
        p = softmax_matrix(q, k)
        assert np.all(np.isfinite(p))
        assert_allclose(p[0], [1.0, math.exp(-400.0)], rtol=1e-12)

    def test_shift_scales_attention_matrix(self, small_inputs):
        a0 = exact_attention_matrix(small_inputs.q, small_inputs.k)
        a1 = exact_attention_matrix(small_inputs.q, small_inputs.k, shift=3.5)
        assert_allclose(a1, a0 * math.exp(-3.5), rtol=1e-13)

    def test_causal_row_sums_match_loop(self, small_inputs):
        q, k = small_inputs.q, small_inputs.k
        expect = [sum(math.exp(q[i] @ k[j] - 1.0) for j in range(i + 1)) for i in range(q.shape[0])]
        assert_allclose(exact_causal_row_sums(q, k, shift=1.0), expect, rtol=1e-13)

    def test_column_norms_match_dense(self, small_inputs):
        q, k = small_inputs.q, small_inputs.k
        for causal in (False, True):
            p = softmax_matrix(q, k, causal)
            assert_allclose(softmax_column_sq_norms(q, k, causal, chunk=7), (p**2).sum(axis=0), rtol=1e-12)


class TestCheckExponents:
    def test_below_limit_passes(self):
        check_exponents(np.full((2, 2), EXP_LIMIT))

    def test_reports_global_index_with_offsets(self):
        logits = np.zeros((3, 4))
        logits[2, 1] = EXP_LIMIT + 1
        with pytest.raises(AttentionOverflowError) as err:
            check_exponents(logits, 10, 20)
        assert (err.value.row, err.value.col) == (12, 21)

    def test_reports_global_index_with_arrays(self):
        logits = np.zeros((2, 3))
        logits[1, 2] = 1e4
        with pytest.raises(AttentionOverflowError) as err:
            check_exponents(logits, np.array([5, 9]), np.array([0, 3, 7]))
        assert (err.value.row, err.value.col, err.value.value) == (9, 7, 1e4)

    def test_exact_matrix_overflow(self):
        q = np.array([[30.0]])
        with pytest.raises(AttentionOverflowError):
            exact_attention_matrix(q, q)
        exact_attention_matrix(q, q, shift=900.0)


class TestOperatorNorm:
    @pytest.mark.parametrize("shape", [(30, 30), (50, 7), (7, 50), (1, 9)])
    def test_matches_svd(self, shape, rng):
        m = rng.standard_normal(shape)
        assert_allclose(operator_norm(m, rel_tol=1e-12), np.linalg.norm(m, 2), rtol=1e-8)

    def test_zero_matrix(self):
        assert operator_norm(np.zeros((4, 3))) == 0.0

    def test_warns_when_not_converged(self, rng):
        m = rng.standard_normal((40, 40))
        with pytest.warns(ConvergenceWarning):
            sigma, ok = operator_norm(m, rel_tol=1e-15, max_iter=2, return_converged=True)
        assert not ok
        assert 0 < sigma <= np.linalg.norm(m, 2) * (1 + 1e-12)

    def test_converged_flag(self, rng):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            _, ok = operator_norm(np.diag([3.0, 1.0]), return_converged=True)
        assert ok

    def test_rejects_bad_tolerance(self):
        with pytest.raises(ValueError):
            operator_norm(np.eye(2), rel_tol=0)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (6, 4), elements=st.floats(-10, 10)))
    def test_never_exceeds_svd(self, m):
        sigma = operator_norm(m, rel_tol=1e-10)
        assert sigma <= np.linalg.norm(m, 2) * (1 + 1e-9) + 1e-12


class TestStableRank:
    def test_identity(self):
        assert_allclose(stable_rank(np.eye(7)), 7.0, rtol=1e-9)

    def test_rank_one(self, rng):
        u, v = rng.standard_normal(10), rng.standard_normal(6)
        assert_allclose(stable_rank(np.outer(u, v)), 1.0, rtol=1e-9)

    def test_zero_raises(self):
        with pytest.raises(ValueError):
            stable_rank(np.zeros((3, 3)))


class TestSeeds:
    def test_deterministic_and_path_dependent(self):
        assert derive_seed(5, (1, 2)) == derive_seed(5, (1, 2))
        assert derive_seed(5, (1, 2)) != derive_seed(5, (2, 1))
        assert derive_seed(5, ()) != derive_seed(6, ())
        assert 0 <= derive_seed(2**40, (3,)) < 2**63
