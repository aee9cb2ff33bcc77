import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cspattn.csp import (
    CspConfig,
    apply_trace,
    cross_channel_interaction,
    csp_forward,
    extract_attention_maps,
    shift_only_heads,
)
from cspattn.errors import ConfigError, ShapeError
from cspattn.numerics import matmul, singular_spectrum
from cspattn.permutation import ShiftSchedule, compose, shift_permutation, to_dense


def brute_force_group_plan(reference, values, k):
    """Dense block-diagonal plan maximising <ref_k vals_k^T, T_k> per group."""
    n = len(reference)
    g = n // k
    dense = np.zeros((n, n))
    for grp in range(k):
        r = reference[grp * g : (grp + 1) * g]
        v = values[grp * g : (grp + 1) * g]
        best = max(itertools.permutations(range(g)), key=lambda p: sum(r[i] * v[p[i]] for i in range(g)))
        for i in range(g):
            dense[grp * g + i, grp * g + best[i]] = 1.0
    return dense


def random_config(rng, tie_free=True):
    k = int(rng.integers(1, 5))
    g = int(rng.integers(1, 5))
    n = k * g
    c = int(rng.integers(1, 7))
    steps = [0] + [int(s) for s in rng.integers(0, 3 * n, c - 1)]
    cfg = CspConfig(c, k, ShiftSchedule.explicit(steps))
    if tie_free:
        x = rng.permutation(n * c).reshape(n, c) + rng.uniform(0, 0.5, (n, c))
    else:
        x = rng.integers(0, 3, (n, c)).astype(float)
    return x, cfg


class TestForward:
    def test_identical_columns(self):
        col = np.array([0.5, -1.0, 2.0, 0.0, 3.0, 1.0])
        x = np.tile(col[:, None], (1, 3))
        for k in (1, 2, 3, 6):
            out, _ = csp_forward(x, CspConfig(3, k, ShiftSchedule.explicit([0, 0, 0])))
            np.testing.assert_array_equal(out, x)

    def test_worked_example(self):
        x = np.array([[3.0, 4.0], [1.0, 8.0], [2.0, 6.0], [0.0, 5.0]])
        cfg = CspConfig(2, 2, ShiftSchedule.explicit([0, 1]))
        out, trace = csp_forward(x, cfg)
        np.testing.assert_array_equal(out[:, 0], x[:, 0])
        np.testing.assert_array_equal(out[:, 1], [5.0, 4.0, 8.0, 6.0])
        shifted = shift_permutation(4, 1).apply(x[:, 1])
        oracle = brute_force_group_plan(x[:, 0], shifted, 2) @ to_dense(shift_permutation(4, 1))
        np.testing.assert_array_equal(oracle @ x[:, 1], out[:, 1])
        np.testing.assert_array_equal(to_dense(trace.total[1]), oracle)

    def test_dense_oracle_seed5(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((12, 5))
        w = rng.standard_normal((5, 5))
        cfg = CspConfig(5, 3, ShiftSchedule.linear(), projection=w)
        out, trace = csp_forward(x, cfg)
        v = matmul(x, w)
        for c, m in enumerate(extract_attention_maps(trace)):
            np.testing.assert_array_equal(m @ v[:, c], out[:, c])

    def test_brute_force_trace(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            x, cfg = random_config(rng)
            n = x.shape[0]
            _, trace = csp_forward(x, cfg)
            steps = cfg.channel_steps(n)
            for c in range(cfg.channels):
                if c == 0:
                    assert trace.total[c].is_identity()
                    continue
                shifted = shift_permutation(n, int(steps[c])).apply(x[:, c])
                plan = brute_force_group_plan(x[:, 0], shifted, cfg.groups)
                np.testing.assert_array_equal(to_dense(trace.sort[c]), plan)

    def test_config_errors(self):
        with pytest.raises(ConfigError):
            csp_forward(np.zeros((5, 2)), CspConfig(2, 2))
        with pytest.raises(ShapeError):
            csp_forward(np.zeros((4, 3)), CspConfig(2, 2))
        with pytest.raises(ConfigError):
            CspConfig(2, 1, reference_channel=2)
        with pytest.raises(ShapeError):
            CspConfig(2, 1, projection=np.eye(3))

    def test_nonzero_reference_channel(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((8, 4))
        out, trace = csp_forward(x, CspConfig(4, 2, ShiftSchedule.linear(), reference_channel=2))
        np.testing.assert_array_equal(out[:, 2], x[:, 2])
        assert trace.total[2].is_identity()


class TestTraceProperties:
    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**31), st.booleans())
    def test_decomposition_and_stochasticity(self, seed, tie_free):
        x, cfg = random_config(np.random.default_rng(seed), tie_free)
        out, trace = csp_forward(x, cfg)
        for c in range(cfg.channels):
            assert trace.total[c] == compose(trace.sort[c], trace.shift[c])
            np.testing.assert_array_equal(np.sort(out[:, c]), np.sort(x[:, c]))
        assert trace.total[cfg.reference_channel].is_identity()
        for m in extract_attention_maps(trace):
            assert np.all(m.sum(axis=0) == 1.0) and np.all(m.sum(axis=1) == 1.0)
            assert set(np.unique(m)) <= {0.0, 1.0}

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31))
    def test_linear_with_frozen_trace(self, seed):
        rng = np.random.default_rng(seed)
        x, cfg = random_config(rng)
        _, trace = csp_forward(x, cfg)
        a, b = rng.standard_normal(x.shape), rng.standard_normal(x.shape)
        alpha, beta = rng.standard_normal(2)
        lhs = apply_trace(alpha * a + beta * b, cfg, trace)
        rhs = alpha * apply_trace(a, cfg, trace) + beta * apply_trace(b, cfg, trace)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12, rtol=0)

    def test_shift_only_maps(self):
        n, c = 6, 4
        x = np.random.default_rng(2).standard_normal((n, c))
        cfg = CspConfig(c, n, ShiftSchedule.explicit([0, 1, 3, 8]))
        _, trace = csp_forward(x, cfg)
        for m, j in zip(extract_attention_maps(trace), [0, 1, 3, 2]):
            np.testing.assert_array_equal(m, to_dense(shift_permutation(n, j)))

    def test_maps_have_unit_spectrum(self):
        x = np.random.default_rng(3).standard_normal((12, 4))
        _, trace = csp_forward(x, CspConfig(4, 3))
        for m in extract_attention_maps(trace):
            np.testing.assert_allclose(singular_spectrum(m), 1.0, atol=1e-12)

    def test_head_count_exceeds_sequence_length(self):
        # C > N: shifts alone give at most N distinct maps, group sorting gives C
        n, c = 4, 12
        rng = np.random.default_rng(6)
        x = rng.permutation(n * c).reshape(n, c).astype(float)
        shift_only = CspConfig(c, n, ShiftSchedule.linear())
        _, t_shift = csp_forward(x, shift_only)
        assert len(set(t_shift.total)) <= n
        _, t_sort = csp_forward(x, CspConfig(c, 1, ShiftSchedule.linear()))
        assert len(set(t_sort.total)) > n


class TestShiftOnlyHeads:
    def test_single_channel(self):
        v = np.arange(5.0)[:, None]
        np.testing.assert_array_equal(shift_only_heads(v), v)

    def test_three_channels(self):
        v = np.tile(np.array([1.0, 2.0, 3.0])[:, None], (1, 3))
        out = shift_only_heads(v)
        np.testing.assert_array_equal(out.T, [[1, 2, 3], [3, 1, 2], [2, 3, 1]])

    def test_wraps_modulo_n(self):
        v = np.array([[1.0] * 4, [2.0] * 4])
        out = shift_only_heads(v)
        np.testing.assert_array_equal(out[:, [0, 2]], v[:, [0, 2]])
        np.testing.assert_array_equal(out[:, [1, 3]], v[::-1][:, [1, 3]])


class TestCrossChannel:
    def test_self_and_reference(self):
        x = np.random.default_rng(1).standard_normal((8, 3))
        _, trace = csp_forward(x, CspConfig(3, 2))
        assert cross_channel_interaction(trace, 2, 2).is_identity()
        assert cross_channel_interaction(trace, 0, 1) == trace.total[1]

    def test_dense_oracle_seed9(self):
        x = np.random.default_rng(9).standard_normal((12, 6))
        _, trace = csp_forward(x, CspConfig(6, 3, ShiftSchedule.linear()))
        for c in range(6):
            for cp in range(6):
                rel = to_dense(cross_channel_interaction(trace, c, cp))
                np.testing.assert_array_equal(rel, to_dense(trace.total[c]).T @ to_dense(trace.total[cp]))

    def test_out_of_range(self):
        _, trace = csp_forward(np.ones((4, 2)), CspConfig(2, 1))
        with pytest.raises(IndexError):
            cross_channel_interaction(trace, 0, 2)
