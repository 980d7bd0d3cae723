import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from canmasq import stats


def brute_u(a, b):
    """U for ``a`` by counting pairs, ties scoring one half."""
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)


def enumerated_pvalue(a, b):
    pooled = list(a) + list(b)
    n1, n2 = len(a), len(b)
    mu = n1 * n2 / 2.0
    obs = abs(brute_u(a, b) - mu)
    hits = total = 0
    for idx in itertools.combinations(range(len(pooled)), n1):
        chosen = set(idx)
        aa = [pooled[i] for i in idx]
        bb = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        total += 1
        if abs(brute_u(aa, bb) - mu) >= obs - 1e-12:
            hits += 1
    return hits / total


def brute_midranks(x):
    return np.array([sum(1 for y in x if y < v) + (sum(1 for y in x if y == v) + 1) / 2.0 for v in x])


class TestNormalCdf:
    @pytest.mark.parametrize("z", [-38.0, -8.5, -3.0, -1.0, -1e-6, 0.0, 0.5, 1.96, 6.0, 9.0])
    def test_matches_mpmath(self, z):
        expected = float(mpmath.ncdf(z))
        assert stats.normal_cdf(z) == pytest.approx(expected, rel=1e-13, abs=1e-300)

    def test_symmetry(self):
        for z in np.linspace(-5, 5, 41):
            assert stats.normal_cdf(z) + stats.normal_cdf(-z) == pytest.approx(1.0, abs=1e-15)


class TestPearson:
    def test_covariance_formula(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(50, 4))
        R = stats.pearson_matrix(X)
        for i in range(4):
            for j in range(4):
                xi, xj = X[:, i] - X[:, i].mean(), X[:, j] - X[:, j].mean()
                expected = (xi @ xj) / math.sqrt((xi @ xi) * (xj @ xj))
                assert R[i, j] == pytest.approx(expected, abs=1e-12)

    def test_symmetric_unit_diagonal_and_bounded(self):
        X = np.random.default_rng(0).normal(size=(30, 6))
        R = stats.pearson_matrix(X)
        assert np.array_equal(R, R.T)
        assert np.all(np.diag(R) == 1.0)
        assert np.all(np.abs(R) <= 1.0)

    def test_constant_column_gets_zero_correlation(self):
        X = np.column_stack([np.arange(10.0), np.full(10, 3.0), np.arange(10.0) ** 2])
        R = stats.pearson_matrix(X)
        assert R[1, 0] == 0.0 and R[1, 2] == 0.0 and R[1, 1] == 1.0

    def test_rejects_single_sample(self):
        with pytest.raises(ValueError):
            stats.pearson_matrix(np.ones((1, 3)))


def test_upper_triangle_round_trip():
    R = stats.pearson_matrix(np.random.default_rng(1).normal(size=(20, 5)))
    u = stats.upper_triangle(R)
    assert u.shape == (10,)
    assert u[0] == R[0, 1] and u[4] == R[1, 2]
    assert np.allclose(stats.from_upper_triangle(u, 5), R)


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=30))
def test_midranks_match_brute_force(values):
    assert np.allclose(stats.midranks(values), brute_midranks(values))


class TestMannWhitney:
    def test_hand_value_separated_samples(self):
        res = stats.mann_whitney_u([1, 2, 3, 4], [5, 6, 7, 8], exact=True)
        assert res.u == 0.0
        assert res.pvalue == pytest.approx(2 / 70, abs=0)

    def test_exact_matches_enumeration_for_all_small_splits(self):
        rng = np.random.default_rng(7)
        for total in range(2, 11):
            for n1 in range(1, total):
                for _ in range(3):
                    pooled = rng.integers(0, 4, size=total).astype(float)
                    a, b = pooled[:n1], pooled[n1:]
                    assert stats.mann_whitney_u(a, b, exact=True).pvalue == enumerated_pvalue(a, b)

    def test_u_counts_pairs(self):
        rng = np.random.default_rng(11)
        a, b = rng.integers(0, 6, 9), rng.integers(0, 6, 7)
        assert stats.mann_whitney_u(a, b).u == brute_u(a, b)

    def test_normal_approximation_close_to_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a, b = rng.normal(size=6), rng.normal(size=6) + rng.normal()
            exact = stats.mann_whitney_u(a, b, exact=True).pvalue
            approx = stats.mann_whitney_u(a, b).pvalue
            assert abs(exact - approx) <= 0.05

    def test_normal_approximation_agrees_with_scipy(self):
        rng = np.random.default_rng(9)
        a, b = rng.integers(0, 10, 45).astype(float), rng.integers(0, 10, 45).astype(float)
        ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
        res = stats.mann_whitney_u(a, b)
        assert res.u == ref.statistic
        assert res.pvalue == pytest.approx(ref.pvalue, rel=1e-10)

    def test_all_tied_gives_p_one(self):
        assert stats.mann_whitney_u([2, 2, 2], [2, 2]).pvalue == 1.0

    def test_identical_samples_are_not_significant(self):
        x = np.linspace(0, 1, 45)
        assert stats.mann_whitney_u(x, x).pvalue == 1.0

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            stats.mann_whitney_u([], [1.0])

    @settings(max_examples=60)
    @given(
        st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=20),
        st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=20),
    )
    def test_p_in_unit_interval_and_swap_symmetric(self, a, b):
        ab = stats.mann_whitney_u(a, b)
        ba = stats.mann_whitney_u(b, a)
        assert 0.0 <= ab.pvalue <= 1.0
        assert ab.u + ba.u == pytest.approx(len(a) * len(b))
        assert ab.pvalue == pytest.approx(ba.pvalue, abs=1e-12)


def rank_then_pearson(a, b):
    ra, rb = brute_midranks(list(a)), brute_midranks(list(b))
    return float(np.corrcoef(ra, rb)[0, 1])


class TestSpearman:
    def test_matches_rank_then_pearson(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            a, b = rng.integers(0, 8, 12), rng.normal(size=12)
            assert stats.spearman(a, b).rho == pytest.approx(rank_then_pearson(a, b), abs=1e-12)

    def test_pvalue_matches_student_t(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=20), rng.normal(size=20)
        res = stats.spearman(a, b)
        t = res.rho * math.sqrt(18 / (1 - res.rho**2))
        assert res.pvalue == pytest.approx(2 * sps.t.sf(abs(t), 18), rel=1e-10)

    def test_perfect_monotone_has_zero_p(self):
        res = stats.spearman([1, 2, 3, 4], [10, 20, 30, 40])
        assert res.rho == 1.0 and res.pvalue == 0.0

    def test_reversed_order(self):
        assert stats.spearman([1, 2, 3, 4], [4, 3, 2, 1]).rho == -1.0

    def test_constant_vector_is_degenerate(self):
        with pytest.raises(stats.DegenerateInputError):
            stats.spearman([1, 1, 1], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            stats.spearman([1, 2, 3], [1, 2])
