import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from hyperattn.core import AttentionInputs, softmax_matrix
from hyperattn.diagnostics import alpha_statistic, alpha_sweep, verify_spectral
from hyperattn.hyper import HyperParams
from hyperattn.io_format import report_json
from hyperattn.synthetic import gaussian_inputs, make_inputs, orthogonal_inputs, planted_inputs

EXACT = dict(mask="none", complete_cover=True)


class TestAlpha:
    def test_uniform_softmax(self):
        for n in (8, 32):
            z = np.zeros((n, 4))
            assert alpha_statistic(z, z) == pytest.approx(1.0)

    def test_single_dominant_column(self):
        n = 50
        q = np.ones((n, 1))
        k = np.zeros((n, 1))
        k[13] = 40.0
        # every row sits on column 13, whose squared norm is n
        assert alpha_statistic(q, k) == pytest.approx(n * n, rel=1e-9)
        # dropping the dominant column leaves almost nothing
        assert alpha_statistic(q[:, :], np.roll(k, -13, axis=0), exclude_prefix=1) < 1e-10

    def test_matches_dense(self, small_inputs):
        p = softmax_matrix(small_inputs.q, small_inputs.k)
        expect = small_inputs.n * (p**2).sum(axis=0)[5:].max()
        assert alpha_statistic(small_inputs.q, small_inputs.k, exclude_prefix=5) == pytest.approx(expect)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 40), st.integers(1, 6), st.integers(0, 1000), st.floats(0.01, 5.0))
    def test_alpha_in_range(self, n, d, seed, scale):
        rng = np.random.default_rng(seed)
        q, k = rng.standard_normal((2, n, d)) * scale
        a = alpha_statistic(q, k)
        assert 1.0 - 1e-9 <= a <= n * n * (1 + 1e-9)

    def test_sweep_rows(self):
        rows = alpha_sweep([16, 32], d=4, seed=1)
        assert [r.n for r in rows] == [16, 32]
        for r in rows:
            assert r.alpha_over_n == pytest.approx(r.alpha / r.n)
        assert alpha_sweep([16, 32], 4, 1)[1].alpha == rows[1].alpha


class TestVerify:
    def test_exact_path_has_no_error(self, small_inputs):
        rep = verify_spectral(small_inputs, params=HyperParams(m=small_inputs.n, **EXACT))
        assert rep.err_op < 1e-12
        assert rep.passed
        assert 1 <= rep.alpha_hat <= rep.n
        assert 1 <= rep.srank_hat <= rep.n
        assert math.isnan(rep.kappa_hat) is False

    def test_causal_exact_path(self, small_inputs):
        rep = verify_spectral(small_inputs, params=HyperParams(causal_base_threshold=10, **EXACT), causal=True)
        assert rep.err_op < 1e-12 and rep.causal

    def test_report_fields_and_bound(self):
        x = gaussian_inputs(128, 8, seed=0)
        rep = verify_spectral(x, params=HyperParams(block_size=16, m=32), epsilon=0.3)
        p = softmax_matrix(x.q, x.k)
        assert rep.bound == pytest.approx(0.3 * np.linalg.norm(p, 2) * np.linalg.norm(x.v, 2), rel=1e-4)
        assert rep.passed == (rep.err_op <= rep.bound)
        doc = json.loads(report_json(rep))
        assert doc["params"]["block_size"] == 16
        assert doc["n"] == 128 and doc["d"] == 8


class TestSynthetic:
    def test_gaussian_scaling(self):
        a = gaussian_inputs(10, 4, seed=1, scale=False)
        b = gaussian_inputs(10, 4, seed=1)
        assert_allclose(b.q, a.q / 2)
        assert_allclose(b.k, a.k)

    def test_orthogonal_norms(self):
        x = orthogonal_inputs(20, 5, seed=0, radius=2.0)
        assert_allclose(np.linalg.norm(x.q, axis=1), 2.0)

    def test_planted_entries(self):
        inst = planted_inputs(64, 16, seed=0)
        prod = inst.inputs.q @ inst.inputs.k.T
        assert_allclose(prod[np.arange(64), inst.heavy_cols], 10.0, atol=0.5)
        assert np.array_equal(np.sort(inst.heavy_cols), np.arange(64))

    def test_make_inputs(self):
        assert isinstance(make_inputs("planted", 8, 2), AttentionInputs)
        with pytest.raises(ValueError):
            make_inputs("uniform", 8, 2)
