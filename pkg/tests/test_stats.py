import math

import numpy as np
import pytest
import scipy.special
import scipy.stats

from mobequity.stats import (
    DegenerateVarianceError,
    EmptySampleError,
    LengthMismatchError,
    lower_median,
    median_ci,
    moods_median_test,
    norm_ppf,
    pearson,
    regularized_incomplete_beta,
    stars,
)


class TestSpecialFunctions:
    def test_incomplete_beta_vs_scipy(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            a = rng.uniform(0.5, 50)
            b = rng.uniform(0.5, 50)
            x = rng.uniform(0.001, 0.999)
            assert regularized_incomplete_beta(a, b, x) == pytest.approx(
                float(scipy.special.betainc(a, b, x)), rel=1e-11, abs=1e-13
            )

    def test_norm_ppf_values(self):
        assert norm_ppf(0.975) == pytest.approx(1.959963984540054, abs=1e-11)
        for q in (0.001, 0.01, 0.3, 0.5, 0.7, 0.99, 0.9999):
            assert norm_ppf(q) == pytest.approx(float(scipy.stats.norm.ppf(q)), abs=1e-11)

    def test_lower_median(self):
        assert lower_median([10, 20, 30]) == 20
        assert lower_median([10, 20]) == 10
        assert lower_median([7]) == 7
        with pytest.raises(EmptySampleError):
            lower_median([])


class TestStars:
    @pytest.mark.parametrize(
        "p,label",
        [
            (0.0005, "***"),
            (0.02, "*"),
            (0.5, "ns"),
            (0.05, "ns"),
            (0.01, "*"),
            (0.001, "**"),
            (0.004, "**"),
        ],
    )
    def test_thresholds(self, p, label):
        assert stars(p) == label


class TestPearson:
    def test_perfect_positive(self):
        x = np.arange(1.0, 11.0)
        r = pearson(x, 2 * x + 1)
        assert abs(r.statistic - 1.0) < 1e-12
        assert r.p_value < 1e-12

    def test_perfect_negative(self):
        x = np.arange(1.0, 11.0)
        assert abs(pearson(x, -x).statistic + 1.0) < 1e-12

    def test_hand_computed_r(self):
        # x=[1..5], y=[2,1,4,3,6]: cov=10, sxx=10, syy=14.8 -> r = 5/sqrt(37)
        r = pearson([1, 2, 3, 4, 5], [2, 1, 4, 3, 6])
        assert r.statistic == pytest.approx(5 / math.sqrt(37), abs=1e-12)

    def test_p_value_vs_scipy(self):
        rng = np.random.default_rng(6)
        for n in (5, 10, 30, 200):
            x = rng.normal(size=n)
            y = 0.3 * x + rng.normal(size=n)
            ours = pearson(x, y)
            ref = scipy.stats.pearsonr(x, y)
            assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)
            assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-12)

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            x = rng.normal(size=20)
            y = rng.normal(size=20)
            assert pearson(x, y).statistic == pearson(y, x).statistic
            assert abs(pearson(x, y).statistic) <= 1 + 1e-12

    def test_affine_invariance(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=50)
        y = rng.normal(size=50)
        base = pearson(x, y).statistic
        assert abs(pearson(3.7 * x + 11.0, y).statistic - base) < 1e-12

    def test_errors(self):
        with pytest.raises(LengthMismatchError):
            pearson([1, 2, 3], [1, 2])
        with pytest.raises(LengthMismatchError):
            pearson([1, 2], [1, 2])
        with pytest.raises(DegenerateVarianceError):
            pearson([1, 1, 1], [1, 2, 3])


class TestMoodsMedianTest:
    def test_identical_samples(self):
        r = moods_median_test([1, 2, 3, 4], [1, 2, 3, 4])
        assert r.statistic == 0.0
        assert r.p_value == 1.0

    def test_hand_computed_table(self):
        # pooled median 1 -> table [[0,4],[4,0]] -> chi2 = 8, p = erfc(2)
        r = moods_median_test([1, 1, 1, 1], [9, 9, 9, 9])
        assert r.statistic == pytest.approx(8.0, abs=1e-9)
        assert r.p_value == pytest.approx(0.0046777349810473, abs=1e-4)
        assert r.stars == "**"

    def test_against_scipy_median_test(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            a = rng.normal(size=rng.integers(10, 60))
            b = rng.normal(loc=rng.uniform(0, 1), size=rng.integers(10, 60))
            ours = moods_median_test(a, b)
            stat, p, _, _ = scipy.stats.median_test(a, b, ties="below", correction=False)
            assert ours.statistic == pytest.approx(stat, rel=1e-10, abs=1e-12)
            assert ours.p_value == pytest.approx(p, rel=1e-9, abs=1e-12)

    def test_yates_correction(self):
        a = [1, 1, 1, 1]
        b = [9, 9, 9, 9]
        stat, p, _, _ = scipy.stats.median_test(a, b, ties="below", correction=True)
        ours = moods_median_test(a, b, yates=True)
        assert ours.statistic == pytest.approx(stat, abs=1e-12)

    def test_degenerate_table(self):
        r = moods_median_test([5, 5], [5, 5])
        assert r.degenerate
        assert r.p_value == 1.0

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(10)
        a = rng.normal(size=40)
        b = rng.normal(0.4, size=35)
        base = moods_median_test(a, b)
        for transform in (np.exp, lambda v: v**3, lambda v: np.arctan(v) * 5):
            r = moods_median_test(transform(a), transform(b))
            assert r.statistic == pytest.approx(base.statistic, abs=1e-12)

    def test_null_distribution_matches_hypergeometric(self):
        # permutation null: group-a "above grand median" count is
        # hypergeometric; compare the empirical p-value CDF with the exact
        # one (independent oracle) and pin the alpha=0.05 rejection rate
        n = 150
        pooled = np.sort(np.random.default_rng(42).normal(size=2 * n))
        rng = np.random.default_rng(43)
        trials = 2000
        pvals = np.empty(trials)
        for t in range(trials):
            perm = rng.permutation(2 * n)
            pvals[t] = moods_median_test(pooled[perm[:n]], pooled[perm[n:]]).p_value
        ks = scipy.stats.hypergeom(2 * n, n, n)
        atoms = {}
        for k in range(n + 1):
            det = k * k - (n - k) * (n - k)
            stat = 2 * n * det * det / n**4
            p = math.erfc(math.sqrt(0.5 * stat)) if stat > 0 else 1.0
            atoms[p] = atoms.get(p, 0.0) + ks.pmf(k)
        levels = np.array(sorted(atoms))
        exact_cdf = np.cumsum([atoms[p] for p in levels])
        emp_cdf = np.searchsorted(np.sort(pvals), levels, side="right") / trials
        assert np.max(np.abs(emp_cdf - exact_cdf)) < 0.02
        rate = float(np.mean(pvals < 0.05))
        assert abs(rate - 0.05) <= 0.015


class TestMedianCI:
    def test_ranks_n100(self):
        # n=100 at 95%: lower rank round(50 - 9.8) = 40, upper round(61 - 0.2) = 61
        ci = median_ci(np.arange(1.0, 101.0), 0.95)
        assert (ci.lo, ci.hi) == (40.0, 61.0)
        assert ci.median == 50.0

    def test_constant_sample(self):
        ci = median_ci([3.0] * 50)
        assert ci.lo == ci.median == ci.hi == 3.0

    def test_endpoints_are_order_statistics(self):
        sample = [4.0, 1.0, 6.0, 3.0, 7.0, 5.0, 2.0]
        ci = median_ci(sample)
        assert ci.lo in sample and ci.hi in sample

    def test_small_sample_flag(self):
        ci = median_ci([1.0, 2.0, 3.0])
        assert ci.small_sample
        assert (ci.lo, ci.hi) == (1.0, 3.0)

    def test_widens_with_level(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=200)
        prev = median_ci(x, 0.5)
        for level in (0.8, 0.9, 0.95, 0.99):
            ci = median_ci(x, level)
            assert ci.lo <= prev.lo and ci.hi >= prev.hi
            prev = ci

    def test_empty(self):
        with pytest.raises(EmptySampleError):
            median_ci([])
