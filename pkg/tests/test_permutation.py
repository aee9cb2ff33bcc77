import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cspattn.errors import ConfigError, ShapeError
from cspattn.permutation import (
    DegenerateScheduleWarning,
    Permutation,
    ShiftSchedule,
    compose,
    group_sort_permutation,
    identity,
    integer_root_floor,
    reference_sort_permutation,
    resolve_schedule,
    shift_permutation,
    to_dense,
)


def eq3_matrix(n, j):
    """Block form [[0, I_j], [I_{n-j}, 0]]."""
    m = np.zeros((n, n))
    m[:j, n - j :] = np.eye(j)
    m[j:, : n - j] = np.eye(n - j)
    return m


def brute_force_match(reference, values):
    """Permutation maximising <reference values^T, T> by enumeration."""
    g = len(reference)
    best, best_score = None, -np.inf
    for perm in itertools.permutations(range(g)):
        score = sum(reference[i] * values[perm[i]] for i in range(g))
        if score > best_score:
            best, best_score = perm, score
    return np.array(best)


def tie_free(rng, n):
    return rng.permutation(n * 7)[:n].astype(float) + rng.uniform(0, 0.5, n)


class TestShift:
    def test_identity(self):
        assert shift_permutation(4, 0).map.tolist() == [0, 1, 2, 3]

    def test_step_one(self):
        x = np.array([1, 2, 3, 4])
        out = shift_permutation(4, 1).apply(x)
        assert out.tolist() == [4, 1, 2, 3]
        np.testing.assert_array_equal(eq3_matrix(4, 1) @ x, out)

    def test_modular(self):
        assert shift_permutation(4, 5) == shift_permutation(4, 1)

    @pytest.mark.parametrize("n,j", [(3, 1), (5, 2), (8, 7), (6, 0)])
    def test_dense_is_block_form(self, n, j):
        np.testing.assert_array_equal(to_dense(shift_permutation(n, j)), eq3_matrix(n, j))


class TestReferenceSort:
    def test_brute_force_example(self):
        ref, vals = [3.0, 1.0, 2.0], [10.0, 20.0, 30.0]
        p = reference_sort_permutation(ref, vals)
        assert p.apply(np.array(vals)).tolist() == [30.0, 10.0, 20.0]
        np.testing.assert_array_equal(p.map, brute_force_match(ref, vals))

    def test_self_is_identity(self):
        v = np.array([0.3, -1.0, 2.5, 0.1])
        assert reference_sort_permutation(v, v).is_identity()

    def test_two_element(self):
        p = reference_sort_permutation([0.0, 1.0], [5.0, 2.0])
        assert p.apply(np.array([5.0, 2.0])).tolist() == [2.0, 5.0]

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            reference_sort_permutation([1.0, 2.0], [1.0])

    def test_stable_ties(self):
        # tied reference entries receive the ascending values in index order
        p = reference_sort_permutation([1.0, 1.0, 0.0], [9.0, 7.0, 8.0])
        assert p.apply(np.array([9.0, 7.0, 8.0])).tolist() == [8.0, 9.0, 7.0]

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**31))
    def test_maximises_inner_product(self, g, seed):
        rng = np.random.default_rng(seed)
        ref, vals = tie_free(rng, g), tie_free(rng, g)
        p = reference_sort_permutation(ref, vals)
        np.testing.assert_array_equal(p.map, brute_force_match(ref, vals))


class TestGroupSort:
    def test_singleton_groups(self):
        rng = np.random.default_rng(0)
        assert group_sort_permutation(rng.random(6), rng.random(6), 6).is_identity()

    def test_one_group_is_complete_sort(self):
        rng = np.random.default_rng(1)
        r, v = rng.random(9), rng.random(9)
        assert group_sort_permutation(r, v, 1) == reference_sort_permutation(r, v)

    def test_worked_example(self):
        ref, vals = [3.0, 1.0, 2.0, 0.0], [4.0, 8.0, 6.0, 5.0]
        p = group_sort_permutation(ref, vals, 2)
        assert p.apply(np.array(vals)).tolist() == [8.0, 4.0, 6.0, 5.0]
        expected = np.concatenate(
            [brute_force_match(ref[:2], vals[:2]), 2 + brute_force_match(ref[2:], vals[2:])]
        )
        np.testing.assert_array_equal(p.map, expected)

    def test_indivisible(self):
        with pytest.raises(ConfigError):
            group_sort_permutation(np.zeros(5), np.zeros(5), 2)

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from([(4, 2), (8, 2), (8, 4), (12, 3), (12, 6), (6, 1)]), st.integers(0, 2**31))
    def test_block_diagonal(self, nk, seed):
        n, k = nk
        rng = np.random.default_rng(seed)
        d = to_dense(group_sort_permutation(rng.standard_normal(n), rng.standard_normal(n), k))
        g = n // k
        mask = np.kron(np.eye(k), np.ones((g, g)))
        assert np.all(d[mask == 0] == 0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 16), st.integers(0, 2**31), st.booleans())
    def test_pair_fast_path_matches_general(self, k, seed, with_ties):
        rng = np.random.default_rng(seed)
        if with_ties:
            r, v = rng.integers(0, 3, 2 * k).astype(float), rng.integers(0, 3, 2 * k).astype(float)
        else:
            r, v = rng.standard_normal(2 * k), rng.standard_normal(2 * k)
        fast = group_sort_permutation(r, v, k, fast_pairs=True)
        slow = group_sort_permutation(r, v, k, fast_pairs=False)
        assert fast == slow


class TestCompose:
    def test_identity_and_inverse(self):
        p = Permutation([2, 0, 3, 1])
        assert compose(p, identity(4)) == p
        assert compose(p, p.inverse()).is_identity()

    def test_shift_additivity(self):
        x = np.arange(4)
        c = compose(shift_permutation(4, 1), shift_permutation(4, 2))
        assert c == shift_permutation(4, 3)
        np.testing.assert_array_equal(c.apply(x), shift_permutation(4, 1).apply(shift_permutation(4, 2).apply(x)))

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            compose(identity(3), identity(4))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 9).flatmap(lambda n: st.tuples(st.permutations(range(n)), st.permutations(range(n)))))
    def test_dense_homomorphism(self, pair):
        a, b = Permutation(pair[0]), Permutation(pair[1])
        np.testing.assert_array_equal(to_dense(compose(a, b)), to_dense(a) @ to_dense(b))
        assert sorted(compose(a, b).map.tolist()) == list(range(len(a)))


class TestDense:
    def test_identity(self):
        np.testing.assert_array_equal(to_dense(identity(5)), np.eye(5))

    def test_shift_three(self):
        np.testing.assert_array_equal(
            to_dense(shift_permutation(3, 1)), [[0, 0, 1], [1, 0, 0], [0, 1, 0]]
        )

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12).flatmap(lambda n: st.permutations(range(n))))
    def test_doubly_stochastic_and_applies(self, perm):
        p = Permutation(perm)
        d = to_dense(p)
        assert np.all(d.sum(axis=0) == 1) and np.all(d.sum(axis=1) == 1)
        x = np.arange(len(perm), dtype=float) * 1.5
        np.testing.assert_array_equal(d @ x, p.apply(x))

    def test_rejects_non_bijection(self):
        with pytest.raises(ValueError):
            Permutation([0, 0, 1])


class TestSchedule:
    def test_linear(self):
        steps = resolve_schedule(ShiftSchedule.linear(), 64, 8).steps
        assert steps.tolist() == [0, 8, 16, 24, 32, 40, 48, 56]

    def test_linear_wraps(self):
        steps = resolve_schedule(ShiftSchedule.linear(), 4, 8).steps
        assert steps.tolist() == [0, 1, 2, 3, 0, 1, 2, 3]
        assert np.all(steps < 4)

    def test_power_law(self):
        r = resolve_schedule(ShiftSchedule.power(0, 1), 1024, 11)
        assert r.base == 2
        assert r.steps.tolist() == [0, 1, 3, 7, 15, 31, 63, 127, 255, 511, 1023]
        assert not r.degenerate

    def test_power_law_degenerate(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            r = resolve_schedule(ShiftSchedule.power(0, 4), 16, 8)
        assert r.degenerate and r.base == 1
        assert r.steps.tolist() == [0] * 8
        assert any(issubclass(w.category, DegenerateScheduleWarning) for w in caught)

    def test_power_law_layers_contiguous(self):
        # L=2, C=4 -> 8 global channels, J = floor(255**(1/7)) = 2
        first = resolve_schedule(ShiftSchedule.power(0, 2), 255, 4).steps
        second = resolve_schedule(ShiftSchedule.power(1, 2), 255, 4).steps
        assert first.tolist() == [0, 1, 3, 7]
        assert second.tolist() == [0, 31, 63, 127]

    def test_power_law_needs_two_channels(self):
        with pytest.raises(ConfigError):
            resolve_schedule(ShiftSchedule.power(0, 1), 8, 1)

    def test_explicit(self):
        assert resolve_schedule(ShiftSchedule.explicit([0, 9, 2]), 8, 3).steps.tolist() == [0, 1, 2]
        with pytest.raises(ConfigError):
            resolve_schedule(ShiftSchedule.explicit([1, 2, 3]), 8, 3)

    @pytest.mark.parametrize("n,k", [(1024, 10), (1000, 3), (2, 1), (1, 5), (10**12, 2), (7, 7)])
    def test_integer_root(self, n, k):
        r = integer_root_floor(n, k)
        assert r**k <= n < (r + 1) ** k

    def test_distinct_steps_distinct_maps(self):
        maps = {shift_permutation(16, j) for j in range(16)}
        assert len(maps) == 16
