import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hyperattn.approx_d import (
    ApproxDParams,
    approx_d,
    estimate_kappa_alpha,
    estimate_row_sums,
    estimate_tau,
    masked_row_sums,
    unmasked_row_sums,
)
from hyperattn.core import AttentionOverflowError, exact_attention_matrix, softmax_matrix
from hyperattn.lsh import LshParams, sort_lsh_mask
from hyperattn.masks import BlockPermMask, SparseMask, empty_mask, full_mask
from hyperattn.synthetic import gaussian_inputs


@pytest.fixture
def setup():
    x = gaussian_inputs(64, 8, seed=11)
    mask = sort_lsh_mask(x.q, x.k, 8, LshParams(6, seed=1))
    return x.q, x.k, mask, exact_attention_matrix(x.q, x.k)


class TestExactParts:
    def test_masked_block(self, setup):
        q, k, mask, a = setup
        assert_allclose(masked_row_sums(q, k, mask), (a * mask.to_dense()).sum(axis=1), rtol=1e-13)

    def test_masked_short_block(self, rng):
        q, k = rng.standard_normal((2, 23, 4)) / 2
        mask = BlockPermMask(rng.permutation(23), rng.permutation(23), 5)
        a = exact_attention_matrix(q, k)
        assert_allclose(masked_row_sums(q, k, mask), (a * mask.to_dense()).sum(axis=1), rtol=1e-13)

    def test_masked_rectangular(self, rng):
        q = rng.standard_normal((9, 3))
        k = rng.standard_normal((7, 3))
        mask = BlockPermMask(rng.permutation(9), rng.permutation(7), 3)
        a = exact_attention_matrix(q, k)
        assert_allclose(masked_row_sums(q, k, mask), (a * mask.to_dense()).sum(axis=1), rtol=1e-13)

    def test_masked_sparse(self, setup, rng):
        q, k, _, a = setup
        dense = rng.random(a.shape) < 0.1
        mask = SparseMask.from_pairs(64, *np.nonzero(dense))
        assert_allclose(masked_row_sums(q, k, mask), (a * dense).sum(axis=1), rtol=1e-13)
        assert_allclose(masked_row_sums(q, k, empty_mask(64)), 0.0)

    def test_masked_shape_check(self, setup):
        q, k, _, _ = setup
        with pytest.raises(ValueError, match="shape"):
            masked_row_sums(q, k, full_mask(10))

    def test_unmasked(self, setup):
        q, k, mask, a = setup
        rows = np.array([0, 5, 63])
        expect = (a * ~mask.to_dense()).sum(axis=1)[rows]
        assert_allclose(unmasked_row_sums(q, k, mask, rows), expect, rtol=1e-13)

    def test_tau_is_max_over_sample(self, setup):
        q, k, mask, a = setup
        tau, sample = estimate_tau(q, k, mask, 10, seed=3)
        assert sample.size == 10 and np.unique(sample).size == 10
        assert tau == pytest.approx((a * ~mask.to_dense()).sum(axis=1)[sample].max(), rel=1e-13)
        full, _ = estimate_tau(q, k, mask, 64, seed=0)
        assert full == pytest.approx((a * ~mask.to_dense()).sum(axis=1).max(), rel=1e-13)

    def test_tau_rejects_large_m(self, setup):
        q, k, mask, _ = setup
        with pytest.raises(ValueError):
            estimate_tau(q, k, mask, 65)

    def test_overflow_names_entry(self, rng):
        q = rng.standard_normal((6, 2)) * 0.1
        q[4] = [40.0, 0.0]
        k = q.copy()
        mask = BlockPermMask(np.arange(6), np.arange(6), 2)
        with pytest.raises(AttentionOverflowError) as err:
            masked_row_sums(q, k, mask)
        assert (err.value.row, err.value.col) == (4, 4)


class TestPracticalMode:
    def test_complete_cover_is_exact(self, setup):
        q, k, mask, a = setup
        d = approx_d(q, k, mask, ApproxDParams(complete_cover=True))
        assert_allclose(d, a.sum(axis=1), rtol=1e-12)

    def test_full_mask_is_exact(self, setup):
        q, k, _, a = setup
        d = approx_d(q, k, full_mask(64), ApproxDParams(m=3, seed=5))
        assert_allclose(d, a.sum(axis=1), rtol=1e-12)

    def test_matches_hand_computation(self, setup):
        q, k, mask, a = setup
        p = ApproxDParams(m=20, seed=8)
        est = estimate_row_sums(q, k, mask, p)
        idx = est.indices
        outside = a * ~mask.to_dense()
        expect = (a * mask.to_dense()).sum(axis=1) + 64 / 20 * outside[:, idx].sum(axis=1)
        assert_allclose(est.final, expect, rtol=1e-12)
        assert est.caps is None and est.tau == 0.0

    def test_fresh_per_row(self, setup):
        q, k, mask, a = setup
        est = estimate_row_sums(q, k, mask, ApproxDParams(m=12, seed=2, fresh_per_row=True))
        assert est.indices.shape == (64, 12)
        outside = a * ~mask.to_dense()
        expect = est.masked_part + 64 / 12 * np.take_along_axis(outside, est.indices, 1).sum(axis=1)
        assert_allclose(est.final, expect, rtol=1e-12)

    def test_shift_scales_estimate(self, setup):
        q, k, mask, _ = setup
        d0 = approx_d(q, k, mask, ApproxDParams(m=16, seed=4))
        d1 = approx_d(q, k, mask, ApproxDParams(m=16, seed=4, shift=2.0))
        assert_allclose(d1, d0 * math.exp(-2.0), rtol=1e-12)

    def test_seeded(self, setup):
        q, k, mask, _ = setup
        p = ApproxDParams(m=16, seed=4)
        assert_allclose(approx_d(q, k, mask, p), approx_d(q, k, mask, p), rtol=0)


class TestTheoreticalMode:
    def params(self, **kw):
        base = dict(m=16, mode="theoretical", kappa=4.0, epsilon=0.5, alpha=10.0, seed=6)
        base.update(kw)
        return ApproxDParams(**base)

    def test_caps_and_clamp(self, setup):
        q, k, mask, a = setup
        p = self.params()
        est = estimate_row_sums(q, k, mask, p)
        masked = (a * mask.to_dense()).sum(axis=1)
        caps = 0.25 * 16 / (64 * math.log(64)) * (masked + est.tau / 4.0)
        assert_allclose(est.caps, caps, rtol=1e-12)
        outside = a * ~mask.to_dense()
        sampled = np.minimum(outside[:, est.indices], caps[:, None]).sum(axis=1)
        expect = masked + np.maximum(64 / 16 * sampled, est.tau / 4.0)
        assert_allclose(est.final, expect, rtol=1e-12)
        assert np.all(est.final >= (masked + est.tau / 4.0) * (1 - 1e-14))

    def test_cap_multiplier(self, setup):
        q, k, mask, _ = setup
        a = estimate_row_sums(q, k, mask, self.params())
        b = estimate_row_sums(q, k, mask, self.params(cap_multiplier=3.0))
        assert_allclose(b.caps, 3 * a.caps, rtol=1e-13)

    @pytest.mark.parametrize(
        "kw",
        [dict(kappa=0.0), dict(kappa=1.0, epsilon=0.5), dict(alpha=0.5, kappa=4.0)],
    )
    def test_precondition_errors(self, kw):
        with pytest.raises(ValueError):
            self.params(**kw)

    def test_generic_errors(self):
        with pytest.raises(ValueError):
            ApproxDParams(m=0)
        with pytest.raises(ValueError):
            ApproxDParams(mode="other")
        with pytest.raises(ValueError):
            ApproxDParams(cap_multiplier=0)


class TestKappaAlpha:
    def test_against_dense(self, setup):
        q, k, mask, a = setup
        ka = estimate_kappa_alpha(q, k, mask)
        outside = (a * ~mask.to_dense()).sum(axis=1)
        assert ka.kappa == pytest.approx(outside.max() / outside.min(), rel=1e-12)
        p = softmax_matrix(q, k)
        assert ka.alpha == pytest.approx(64 * (p**2).sum(axis=0).max(), rel=1e-12)

    def test_undefined_kappa_warns(self, setup):
        q, k, _, _ = setup
        with pytest.warns(UserWarning, match="undefined"):
            ka = estimate_kappa_alpha(q, k, full_mask(64))
        assert math.isnan(ka.kappa)

    def test_infinite_kappa_warns(self):
        q = np.zeros((4, 2))
        mask = SparseMask.from_pairs(4, [0, 0, 0, 0], [0, 1, 2, 3])
        with pytest.warns(UserWarning, match="infinite"):
            ka = estimate_kappa_alpha(q, q, mask)
        assert ka.kappa == math.inf
