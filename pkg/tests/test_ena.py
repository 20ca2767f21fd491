import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_connections
from ssla.core import ValidationError
from ssla.ena import (
    ConnectionVector,
    accumulate_connections,
    circle_layout,
    compare_projection,
    group_networks,
    means_rotation,
    sphere_normalize,
)
from ssla.spatial import TimelineMatrix


def tl(rows, codes="ABCD"):
    rows = np.asarray(rows, dtype=np.int8)
    return TimelineMatrix("u", 0, rows.shape[0], tuple(codes[: rows.shape[1]]), rows)


def all_timelines(T, k):
    for bits in itertools.product((0, 1), repeat=T * k):
        yield np.array(bits, dtype=np.int8).reshape(T, k)


class TestAccumulate:
    def test_examples(self):
        assert accumulate_connections(tl([[1, 0], [1, 0], [0, 0]])).values.tolist() == [0.0]
        assert accumulate_connections(tl([[1, 0], [0, 1]])).values.tolist() == [1.0]
        assert accumulate_connections(tl([[1, 1]])).values.tolist() == [1.0]

    def test_window_cutoff(self):
        rows = [[1, 0]] + [[0, 0]] * 5 + [[0, 1]]
        assert accumulate_connections(tl(rows), 6).values.tolist() == [0.0]
        assert accumulate_connections(tl(rows), 7).values.tolist() == [1.0]

    @pytest.mark.parametrize("T,k", [(T, 2) for T in range(1, 6)] + [(3, 3), (3, 4), (4, 3)])
    def test_exhaustive_small(self, T, k):
        for cells in all_timelines(T, k):
            for w in (1, 3, 6):
                got = accumulate_connections(tl(cells), w).values
                assert np.array_equal(got, brute_connections(cells, w))

    @given(arrays(np.int8, st.tuples(st.integers(1, 10), st.integers(2, 4)), elements=st.integers(0, 1)),
           st.integers(1, 8))
    @settings(max_examples=150)
    def test_sampled(self, cells, w):
        assert np.array_equal(accumulate_connections(tl(cells), w).values, brute_connections(cells, w))

    @given(arrays(np.int8, st.tuples(st.integers(1, 10), st.integers(2, 4)), elements=st.integers(0, 1)))
    def test_window_one_is_within_row(self, cells):
        k = cells.shape[1]
        want = [float(sum(r[i] and r[j] for r in cells)) for i in range(k) for j in range(i + 1, k)]
        assert accumulate_connections(tl(cells), 1).values.tolist() == want

    def test_errors(self):
        with pytest.raises(ValidationError):
            accumulate_connections(tl([[1, 0]]), 0)


class TestNormalize:
    def test_examples(self):
        v = sphere_normalize(ConnectionVector("u", ("a", "b", "c"), np.array([3.0, 4.0, 0.0])))
        assert v.values == pytest.approx([0.6, 0.8, 0.0]) and v.normalized
        z = sphere_normalize(ConnectionVector("u", ("a", "b"), np.zeros(1)))
        assert z.zero and z.values.tolist() == [0.0]
        again = sphere_normalize(v)
        assert np.allclose(again.values, v.values, atol=1e-15)


def _random_units(rng, n=8, d=6):
    V = rng.random((n, d))
    return V / np.linalg.norm(V, axis=1, keepdims=True)


class TestRotation:
    def test_two_units(self):
        V = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        sp = means_rotation(V, [True, False])
        d = np.linalg.norm(V[0] - V[1])
        assert sp.points[:, 0] == pytest.approx([d / 2, -d / 2])
        assert np.allclose(sp.points[:, 1:], 0.0, atol=1e-12)

    def test_symmetric_groups_axis(self):
        V = np.array([[1.0, 2.0], [1.0, -2.0], [-1.0, 2.0], [-1.0, -2.0]])
        sp = means_rotation(V, [True, True, False, False])
        assert np.allclose(sp.axes[0], [1.0, 0.0])

    @pytest.mark.parametrize("seed", range(20))
    def test_group_means_differ_only_on_axis_one(self, seed):
        rng = np.random.default_rng(seed)
        V = _random_units(rng)
        high = np.array([True] * 4 + [False] * 4)
        sp = means_rotation(V, high, residual_dims=3)
        gap = sp.points[high].mean(axis=0) - sp.points[~high].mean(axis=0)
        assert gap[0] > 0
        assert np.all(np.abs(gap[1:]) <= 1e-9)
        assert np.allclose(sp.axes @ sp.axes.T, np.eye(4), atol=1e-9)
        assert list(sp.singular_values) == sorted(sp.singular_values, reverse=True)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        V = _random_units(rng)
        high = np.array([True, False] * 4)
        ids = [f"u{i}" for i in range(8)]
        a = means_rotation(V, high, 2, ids)
        perm = rng.permutation(8)
        b = means_rotation(V[perm], high[perm], 2, [ids[i] for i in perm])
        assert np.allclose(a.points[perm], b.points, atol=1e-9)

    def test_degenerate(self):
        V = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(ValidationError, match="degenerate rotation"):
            means_rotation(V, [True, False])
        with pytest.raises(ValidationError):
            means_rotation(V, [True, True])


def _vecs(V):
    return [ConnectionVector(f"u{i}", ("a", "b", "c"), np.asarray(v, float)) for i, v in enumerate(V)]


class TestNetworks:
    def test_hand_averaged(self):
        V = [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]]
        hi, lo, diff = group_networks(_vecs(V), [True, True, False, False])
        assert hi.weights.tolist() == [0.5, 0.5, 0.0]
        assert lo.weights.tolist() == [0.5, 0.5, 1.0]
        assert diff.weights.tolist() == [0.0, 0.0, -1.0]
        assert np.array_equal(diff.matrix(), diff.matrix().T)

    def test_identical_and_swapped(self):
        V = [[1, 2, 3], [1, 2, 3]]
        assert not group_networks(_vecs(V), [True, False])[2].weights.any()
        V = np.random.default_rng(0).random((6, 3))
        labels = np.array([True, False, True, True, False, False])
        d1 = group_networks(_vecs(V), labels)[2].weights
        d2 = group_networks(_vecs(V), ~labels)[2].weights
        assert np.allclose(d1, -d2)
        hi, lo, _ = group_networks(_vecs(V[:2]), [True, False])
        assert np.array_equal(hi.weights, V[0]) and np.array_equal(lo.weights, V[1])


class TestCompare:
    def test_separated(self):
        V = np.array([[3.0, 0.0], [2.5, 0.1], [2.0, 0.0], [0.0, 0.0], [-0.5, 0.2], [-1.0, 0.0]])
        sp = means_rotation(V, [True] * 3 + [False] * 3)
        res = compare_projection(sp, 1)
        assert abs(res.test.r) == 1.0
        assert res.median_high > res.median_low

    def test_bad_dim(self):
        sp = means_rotation(np.eye(3), [True, False, False])
        with pytest.raises(ValidationError):
            compare_projection(sp, 5)


def test_circle_layout():
    pos = circle_layout(4)
    assert pos[0] == pytest.approx((0.0, -1.0))
    assert all(abs(x * x + y * y - 1) < 1e-12 for x, y in pos)
