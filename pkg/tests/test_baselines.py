import numpy as np
import pytest

from cspattn.baselines import (
    AttentionParams,
    SinkhornConfig,
    attention_map,
    grouped_sinkhorn_attention,
    init_attention_params,
    log_sinkhorn,
    multi_head_attention,
    sinkhorn_csp_distances,
    sinkhorn_normalize,
    softmax_attention,
)
from cspattn.csp import CspConfig, csp_forward
from cspattn.errors import ConfigError, ShapeError
from cspattn.fixtures import separated_matrix
from cspattn.permutation import ShiftSchedule, to_dense


class TestSoftmax:
    def test_single_row(self):
        v = np.array([[2.0, -3.0]])
        np.testing.assert_allclose(softmax_attention(v, [[1.0]], [[4.0]]), v)

    def test_uniform_map(self):
        v = np.random.default_rng(0).standard_normal((5, 3))
        out = softmax_attention(v, np.zeros((5, 2)), np.zeros((5, 2)))
        np.testing.assert_allclose(out, np.tile(v.mean(axis=0), (5, 1)), atol=1e-15)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(13)
        a = attention_map(rng.standard_normal((4, 2)), rng.standard_normal((4, 2)))
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)

    def test_large_logits_stable(self):
        q = np.array([[1000.0], [-1000.0]])
        out = softmax_attention(np.array([[1.0], [2.0]]), q, q)
        assert np.all(np.isfinite(out))

    def test_chunked_matches(self):
        rng = np.random.default_rng(2)
        q, k, v = (rng.standard_normal((37, 4)) for _ in range(3))
        np.testing.assert_allclose(softmax_attention(v, q, k, chunk=8), softmax_attention(v, q, k), atol=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            softmax_attention(np.ones((3, 2)), np.ones((3, 2)), np.ones((3, 3)))


class TestMultiHead:
    def test_single_head_identity(self):
        x = np.random.default_rng(1).standard_normal((6, 4))
        eye = np.eye(4)
        params = AttentionParams((eye,), (eye,), (eye,))
        np.testing.assert_array_equal(multi_head_attention(x, params), softmax_attention(x, x, x))

    def test_two_heads_concatenate(self):
        rng = np.random.default_rng(21)
        x = rng.standard_normal((7, 6))
        params = init_attention_params(6, 2, rng)
        fused = multi_head_attention(x, params)
        assert fused.shape == (7, 6)
        heads = [
            softmax_attention(x @ params.wv[m], x @ params.wq[m], x @ params.wk[m]) for m in range(2)
        ]
        np.testing.assert_array_equal(fused, np.concatenate(heads, axis=1))

    def test_head_dim_contract(self):
        with pytest.raises(ConfigError):
            AttentionParams((np.ones((4, 3)),), (np.ones((4, 3)),), (np.ones((4, 3)),))
        with pytest.raises(ConfigError):
            init_attention_params(6, 4, np.random.default_rng(0))


class TestSinkhorn:
    def test_uniform(self):
        np.testing.assert_allclose(sinkhorn_normalize(np.full((4, 4), 3.0), 1), 0.25, atol=1e-15)

    def test_fixed_point(self):
        a = np.array([[0.2, 0.8], [0.8, 0.2]])
        np.testing.assert_allclose(sinkhorn_normalize(a, 10), a, atol=1e-12)

    def test_converges_to_swap(self):
        v1, vc = np.array([0.0, 1.0]), np.array([5.0, 2.0])
        out = sinkhorn_normalize(np.exp(np.outer(v1, vc) / 0.01), 1000)
        assert np.abs(out - np.array([[0.0, 1.0], [1.0, 0.0]])).max() < 1e-3

    def test_log_domain_matches_plain(self):
        a = np.random.default_rng(4).uniform(0.1, 2.0, (5, 5))
        np.testing.assert_allclose(log_sinkhorn(np.log(a), 7), sinkhorn_normalize(a, 7), rtol=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            sinkhorn_normalize(np.array([[1.0, 0.0], [1.0, 1.0]]), 3)

    @pytest.mark.parametrize("t", [1, 3, 10, 50])
    def test_last_margin_exact(self, t):
        a = np.random.default_rng(t).uniform(0.01, 5.0, (6, 6))
        out = sinkhorn_normalize(a, t)
        np.testing.assert_allclose(out.sum(axis=0), 1.0, atol=1e-14)

    def test_row_margin_improves_with_t(self):
        a = np.random.default_rng(3).uniform(0.01, 5.0, (6, 6))
        devs = [np.abs(sinkhorn_normalize(a, t).sum(axis=1) - 1).max() for t in (1, 5, 25)]
        assert devs[0] > devs[1] > devs[2]

    @pytest.mark.parametrize(
        "tau,n", [(0.1, 8), (0.1, 16), (0.1, 32), (0.3, 2), (0.3, 4), (0.3, 32), (1.0, 2), (1.0, 32)]
    )
    def test_doubly_stochastic_limit(self, tau, n):
        # unit-scale inputs; large products make Sinkhorn converge sublinearly
        v = np.random.default_rng(n).standard_normal((n, 3))
        v /= np.abs(v).max()
        res = grouped_sinkhorn_attention(v, SinkhornConfig(5000, tau, 1))
        assert res.doubly_stochastic
        assert res.max_row_deviation < 1e-9 and res.max_col_deviation < 1e-9


class TestGroupedSinkhorn:
    def test_singleton_groups(self):
        v = np.random.default_rng(0).standard_normal((6, 3))
        res = grouped_sinkhorn_attention(v, SinkhornConfig(5, 0.5, 6))
        np.testing.assert_allclose(res.output, v, atol=1e-15)
        for m in res.maps:
            np.testing.assert_allclose(m, np.eye(6), atol=1e-15)

    def test_no_iterations_flags_margins(self):
        v = np.random.default_rng(1).standard_normal((8, 2))
        res = grouped_sinkhorn_attention(v, SinkhornConfig(0, 1.0, 2))
        assert not res.doubly_stochastic
        assert res.max_row_deviation > 1e-3

    def test_divisibility(self):
        with pytest.raises(ConfigError):
            grouped_sinkhorn_attention(np.ones((5, 2)), SinkhornConfig(1, 1.0, 2))
        with pytest.raises(ConfigError):
            SinkhornConfig(1, 0.0, 1)

    def test_block_structure(self):
        v = np.random.default_rng(5).standard_normal((8, 2))
        res = grouped_sinkhorn_attention(v, SinkhornConfig(20, 0.5, 4))
        mask = np.kron(np.eye(4), np.ones((2, 2)))
        for m in res.maps:
            assert np.all(m[mask == 0] == 0)

    def test_converges_to_hard_csp(self):
        # all steps 0, so CSP's maps are the sort plans alone
        v = separated_matrix(np.random.default_rng(17), 8, 4)
        _, trace = csp_forward(v, CspConfig(4, 2, ShiftSchedule.explicit([0] * 4)))
        res = grouped_sinkhorn_attention(v, SinkhornConfig(2000, 0.01, 2))
        for c in range(4):
            assert np.abs(res.maps[c] - to_dense(trace.sort[c])).max() < 1e-2

    def test_near_ties_stay_soft(self):
        # a product gap of ~tau leaves the entropic plan visibly mixed
        v = np.array([[1.0, 0.0], [0.0, 0.01]])
        res = grouped_sinkhorn_attention(v, SinkhornConfig(2000, 0.01, 1))
        assert 0.1 < res.maps[1][0, 0] < 0.9

    @pytest.mark.parametrize("k", [1, 2, 4])
    def test_monotone_in_tau_with_shifts(self, k):
        v = separated_matrix(np.random.default_rng(19 + k), 8, 3)
        dists = sinkhorn_csp_distances(v, CspConfig(3, k, ShiftSchedule.linear()))
        assert all(b <= a for a, b in zip(dists, dists[1:]))
        assert dists[-1] < 1e-2
