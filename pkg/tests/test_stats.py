import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_mw_exact_p, brute_permanova_p, brute_pseudo_f
from ssla.core import ValidationError
from ssla.stats import (
    bootstrap_ci,
    holm_adjust,
    mann_whitney,
    mann_whitney_exact_p,
    n_arrangements,
    paired_t,
    permanova,
    rank_biserial,
    spearman,
    u_null_counts,
)

REPORTED_R = [
    ((123, 40, 11), 0.441),
    ((106, 40, 11), 0.518),
    ((198, 30, 21), 0.371),
    ((359, 40, 11), -0.632),
    ((505, 30, 21), -0.603),
    ((363, 40, 11), -0.650),
    ((492, 30, 21), -0.562),
]


class TestMannWhitney:
    def test_separated(self):
        r = mann_whitney([1, 2, 3], [4, 5, 6])
        assert r.U == 0 and r.method == "exact"
        assert r.p_raw == pytest.approx(0.1)
        assert r.p_raw == pytest.approx(brute_mw_exact_p([1, 2, 3], [4, 5, 6]))
        assert r.r == 1.0

    def test_identical_multisets(self):
        r = mann_whitney([1, 2, 2, 5], [1, 2, 2, 5])
        assert r.U == 8 and r.r == 0.0 and r.method == "normal-approx"

    @pytest.mark.parametrize("args, r", REPORTED_R)
    def test_rank_biserial_tuples(self, args, r):
        assert rank_biserial(*args) == pytest.approx(r, abs=1e-3)

    def test_null_counts_sum(self):
        for n1, n2 in [(1, 1), (3, 4), (5, 7)]:
            c = u_null_counts(n1, n2)
            assert sum(c) == math.comb(n1 + n2, n1) and len(c) == n1 * n2 + 1
            assert c == c[::-1]

    @pytest.mark.parametrize("n1,n2", [(1, 2), (2, 3), (3, 3), (4, 5), (3, 7)])
    def test_exact_matches_enumeration(self, n1, n2):
        vals = list(range(n1 + n2))
        for xs in itertools.combinations(vals, n1):
            ys = [v for v in vals if v not in xs]
            got = mann_whitney(xs, ys)
            assert got.p_raw == pytest.approx(brute_mw_exact_p(xs, ys), abs=1e-12)

    @given(st.lists(st.integers(0, 9), min_size=1, max_size=9),
           st.lists(st.integers(0, 9), min_size=1, max_size=9))
    @settings(max_examples=100)
    def test_swap_and_bounds(self, x, y):
        a, b = mann_whitney(x, y), mann_whitney(y, x)
        assert a.U + b.U == pytest.approx(len(x) * len(y))
        assert a.r == pytest.approx(-b.r)
        assert a.p_raw == pytest.approx(b.p_raw)
        assert 0 < a.p_raw <= 1 and 0 <= a.U <= len(x) * len(y)
        assert a.r == pytest.approx(1 - 2 * a.U / (len(x) * len(y)))

    def test_empty(self):
        with pytest.raises(ValidationError):
            mann_whitney([], [1.0])

    def test_exact_p_helper(self):
        assert mann_whitney_exact_p(0, 3, 3) == pytest.approx(0.1)


class TestHolm:
    def test_reported_values(self):
        others = [0.5] * 10
        assert holm_adjust([0.0011] + others).adjusted[0] == pytest.approx(0.0121, abs=1e-4)
        assert holm_adjust([0.000730] + others).adjusted[0] == pytest.approx(0.00803, abs=1e-4)
        assert holm_adjust([0.027] + [0.5] * 5).adjusted[0] == pytest.approx(0.163, abs=2e-3)

    def test_all_ones(self):
        assert holm_adjust([1.0, 1.0, 1.0]).adjusted == (1.0, 1.0, 1.0)

    def test_bonferroni(self):
        assert holm_adjust([0.01, 0.2], method="bonferroni").adjusted == (0.02, 0.4)

    def test_bad_p(self):
        with pytest.raises(ValidationError):
            holm_adjust([0.0])

    @given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=15))
    def test_properties(self, p):
        res = holm_adjust(p)
        adj = res.adjusted
        assert all(a >= r - 1e-15 and a <= 1.0 for a, r in zip(adj, p))
        order = sorted(range(len(p)), key=lambda i: p[i])
        ordered = [adj[i] for i in order]
        assert all(x <= y for x, y in zip(ordered, ordered[1:]))
        assert ordered[0] >= min(1.0, len(p) * p[order[0]]) - 1e-12


class TestPermanova:
    def test_identical_groups(self):
        pts = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 1.0]])
        res = permanova(np.vstack([pts, pts]), ["a"] * 3 + ["b"] * 3)
        assert res.pseudo_F == pytest.approx(0.0, abs=1e-12)
        assert res.ss_between == pytest.approx(0.0, abs=1e-9)

    def test_two_by_two(self):
        X = [[0, 0], [0, 1], [10, 0], [10, 1]]
        res = permanova(X, ["H", "H", "L", "L"])
        assert res.method == "exact" and res.permutations == 6
        assert res.p == pytest.approx(2 / 6)
        assert res.p == pytest.approx(brute_permanova_p(X, ["H", "H", "L", "L"]))
        assert res.pseudo_F == pytest.approx(brute_pseudo_f(X, ["H", "H", "L", "L"]))

    @pytest.mark.parametrize("seed", range(4))
    def test_exact_matches_all_orderings(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(6, 3))
        labels = ["a", "a", "a", "b", "b", "c"]
        res = permanova(X, labels)
        assert res.p == pytest.approx(brute_permanova_p(X, labels), abs=1e-12)
        assert res.pseudo_F == pytest.approx(brute_pseudo_f(X, labels), rel=1e-9)

    def test_monte_carlo_near_exact(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(6, 2))
        X[:3] += 0.8
        labels = ["H"] * 3 + ["L"] * 3
        exact = permanova(X, labels).p
        B = 4000
        mc = permanova(X, labels, permutations=B, seed=3, exact=False).p
        se = math.sqrt(exact * (1 - exact) / B)
        assert abs(mc - exact) <= 3 * se + 1 / (B + 1)

    def test_rigid_motion_and_scaling(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(8, 3))
        labels = ["H"] * 4 + ["L"] * 4
        Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        base = permanova(X, labels)
        moved = permanova(X @ Q + np.array([5.0, -2.0, 1.0]), labels)
        scaled = permanova(3.0 * X, labels)
        assert moved.pseudo_F == pytest.approx(base.pseudo_F, rel=1e-9)
        assert scaled.pseudo_F == pytest.approx(base.pseudo_F, rel=1e-9)
        assert moved.p == base.p == scaled.p

    def test_errors(self):
        with pytest.raises(ValidationError, match="degenerate"):
            permanova([[0, 0], [0, 0], [1, 1], [1, 1]], ["a", "a", "b", "b"])
        with pytest.raises(ValidationError):
            permanova([[0], [1]], ["a", "a"])

    def test_arrangement_count(self):
        assert n_arrangements([2, 2]) == 6 and n_arrangements([3, 2, 1]) == 60


class TestSpearman:
    def test_examples(self):
        assert spearman([1, 2, 3], [2, 5, 9]) == 1.0
        assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
        assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)
        with pytest.raises(ValidationError):
            spearman([1, 1, 1], [1, 2, 3])


class TestBootstrap:
    def test_constant(self):
        assert bootstrap_ci([2.0] * 5, B=200) == (2.0, 2.0)

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=20), st.integers(0, 100))
    @settings(max_examples=30, deadline=None)
    def test_contains_estimate_and_deterministic(self, v, seed):
        lo, hi = bootstrap_ci(v, B=300, seed=seed)
        assert lo <= np.mean(v) + 1e-9 and np.mean(v) - 1e-9 <= hi
        assert (lo, hi) == bootstrap_ci(v, B=300, seed=seed)

    def test_coverage(self):
        rng = np.random.default_rng(2024)
        hits = 0
        trials = 500
        for k in range(trials):
            sample = rng.normal(size=60)
            lo, hi = bootstrap_ci(sample, B=600, seed=k)
            hits += lo <= 0.0 <= hi
        assert abs(hits / trials - 0.95) <= 0.03


class TestPairedT:
    def test_examples(self):
        t, df, p = paired_t([1, 2, 3], [0, 0, 0])
        assert t == pytest.approx(2 * math.sqrt(3)) and df == 2
        t, df, p = paired_t([1, -1, 1, -1], [0, 0, 0, 0])
        assert t == 0.0 and p == pytest.approx(1.0)
        with pytest.raises(ValidationError, match="zero-variance"):
            paired_t([1, 2], [1, 2])
