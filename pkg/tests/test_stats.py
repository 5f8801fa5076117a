import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from devprints import stats as S

# Upper 5% / 1% points of the studentized range from standard printed tables.
Q_TABLE = [
    (0.95, 2, 10, 3.151), (0.95, 3, 10, 3.877), (0.95, 4, 10, 4.327), (0.95, 5, 10, 4.654),
    (0.95, 3, 20, 3.578), (0.95, 4, 20, 3.958), (0.95, 5, 30, 4.102), (0.95, 3, 120, 3.356),
    (0.99, 3, 10, 5.270),
]

# Weights (lb) of eleven men, the classic worked example for W; published W = 0.79.
WEIGHTS = [148, 154, 158, 160, 161, 162, 166, 170, 182, 195, 236]


def random_groups(rng, k=None):
    k = k or int(rng.integers(2, 6))
    return [rng.normal(rng.normal(0, 3), rng.uniform(0.2, 3), size=int(rng.integers(2, 15))) for _ in range(k)]


class TestShapiroWilk:
    def test_published_example(self):
        assert round(S.shapiro_wilk(WEIGHTS).w, 2) == 0.79

    @pytest.mark.parametrize("n", [3, 4, 5, 11, 12, 20, 37, 100, 500])
    def test_matches_reference_implementation(self, n):
        x = np.random.default_rng(n).gamma(2.0, size=n)
        ours, ref = S.shapiro_wilk(x), sps.shapiro(x)
        assert ours.w == pytest.approx(ref.statistic, abs=1e-6)
        assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-6)
        assert ours.n == n

    def test_normal_samples_mostly_pass(self):
        passed = sum(S.shapiro_wilk(np.random.default_rng(s).normal(size=37)).p_value > 0.05 for s in range(100))
        assert passed >= 95

    def test_two_point_sample_rejects(self):
        x = np.random.default_rng(0).integers(0, 2, size=37)
        assert S.shapiro_wilk(x).p_value < 0.01

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 100), st.floats(-1e3, 1e3))
    def test_affine_invariance(self, seed, a, b):
        x = np.random.default_rng(seed).normal(size=25)
        assert S.shapiro_wilk(a * x + b).w == pytest.approx(S.shapiro_wilk(x).w, abs=1e-6)

    def test_p_monotone_in_w_for_fixed_n(self):
        results = [S.shapiro_wilk(np.random.default_rng(s).standard_t(3, size=30)) for s in range(40)]
        results.sort(key=lambda r: r.w)
        ps = [r.p_value for r in results]
        assert ps == sorted(ps)

    def test_w_in_range(self):
        for s in range(20):
            r = S.shapiro_wilk(np.random.default_rng(s).exponential(size=15))
            assert 0 < r.w <= 1 and 0 <= r.p_value <= 1

    @pytest.mark.parametrize("x", [[1.0, 2.0], [3.0] * 10, list(range(5001))])
    def test_rejects(self, x):
        with pytest.raises(ValueError):
            S.shapiro_wilk(x)


class TestAnova:
    def test_hand_fixture(self):
        # means 2, 3, 10 around 5: SS_b = 3 (9 + 4 + 25) = 114, SS_w = 3 * 2 = 6
        r = S.anova_oneway([[1, 2, 3], [2, 3, 4], [9, 10, 11]])
        assert (r.df_between, r.df_within) == (2, 6)
        assert r.ss_between == pytest.approx(114) and r.ss_within == pytest.approx(6)
        assert r.f_value == pytest.approx(57)
        # F(2, d) tail is (1 + 2F/d)^(-d/2)
        assert r.p_value == pytest.approx((1 + 2 * 57 / 6) ** -3, rel=1e-9)

    def test_df_for_three_groups_of_37(self):
        rng = np.random.default_rng(0)
        r = S.anova_oneway([rng.normal(size=5), rng.normal(size=5), rng.normal(size=27)])
        assert (r.df_between, r.df_within) == (2, 34)

    def test_ss_identity_on_random_data(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            groups = random_groups(rng)
            r = S.anova_oneway(groups)
            allx = np.concatenate(groups)
            assert r.ss_total == pytest.approx(((allx - allx.mean()) ** 2).sum(), abs=1e-9)

    def test_matches_reference_statistic(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            groups = random_groups(rng)
            assert S.anova_oneway(groups).f_value == pytest.approx(sps.f_oneway(*groups).statistic, rel=1e-9)

    def test_p_value_closed_form_for_three_groups(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            r = S.anova_oneway(random_groups(rng, k=3))
            d = r.df_within
            assert r.p_value == pytest.approx((1 + 2 * r.f_value / d) ** (-d / 2), rel=1e-9, abs=1e-300)

    def test_null_case(self):
        r = S.anova_oneway([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])
        assert r.ss_between == 0 and r.f_value == 0 and r.p_value == pytest.approx(1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-100, 100), st.floats(0.1, 50))
    def test_shift_and_scale_invariance(self, seed, shift, scale):
        groups = random_groups(np.random.default_rng(seed), k=3)
        base = S.anova_oneway(groups)
        assert S.anova_oneway([g + shift for g in groups]).p_value == pytest.approx(base.p_value, rel=1e-6, abs=1e-12)
        assert S.anova_oneway([g * scale for g in groups]).f_value == pytest.approx(base.f_value, rel=1e-9)

    def test_zero_within_variance(self):
        r = S.anova_oneway([[1, 1], [2, 2]])
        assert r.f_value == math.inf and r.p_value == 0.0
        with pytest.raises(ValueError, match="undefined"):
            S.anova_oneway([[1, 1], [1, 1]])

    @pytest.mark.parametrize("groups", [[[1, 2, 3]], [[1, 2], [3]]])
    def test_bad_groups(self, groups):
        with pytest.raises(ValueError):
            S.anova_oneway(groups)


class TestStudentizedRange:
    @pytest.mark.parametrize("prob,k,df,q", Q_TABLE)
    def test_table_points(self, prob, k, df, q):
        assert round(S.studentized_range_ppf(prob, k, df), 3) == q
        assert S.studentized_range_cdf(q, k, df) == pytest.approx(prob, abs=5e-4)

    def test_reference_grid(self):
        for k in (2, 3, 5, 10):
            for df in (2, 5, 34, 200):
                for q in (0.5, 2.0, 3.5, 6.0):
                    ref = sps.studentized_range.cdf(q, k, df)
                    assert S.studentized_range_cdf(q, k, df) == pytest.approx(ref, abs=1e-7)

    @pytest.mark.parametrize("df", [1, 3, 10, 34, 100])
    def test_two_groups_reduce_to_t(self, df):
        for q in (0.3, 1.0, 2.5, 4.0, 8.0):
            expected = 2 * sps.t.cdf(q / math.sqrt(2), df) - 1
            assert S.studentized_range_cdf(q, 2, df) == pytest.approx(expected, abs=1e-6)

    def test_limits(self):
        assert S.studentized_range_cdf(1e-9, 3, 10) == pytest.approx(0.0, abs=1e-9)
        assert S.studentized_range_cdf(1e3, 3, 10) == pytest.approx(1.0, abs=1e-9)

    def test_monotone(self):
        for k, df in [(2, 3), (3, 10), (6, 34), (10, 120)]:
            values = [S.studentized_range_cdf(q, k, df) for q in np.linspace(0.05, 10, 60)]
            assert all(b >= a for a, b in zip(values, values[1:]))
            assert all(0 <= v <= 1 for v in values)


class TestTukey:
    def test_identical_groups(self):
        res = S.tukey_hsd([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
        (p,) = res.pairs
        assert p.diff == 0 and p.p_adj == pytest.approx(1.0, abs=1e-6)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(3)
        a, b, c = rng.normal(0, 1, 6), rng.normal(1, 1, 8), rng.normal(2, 1, 5)
        fwd = S.tukey_hsd({"A": a, "B": b, "C": c}).pair("A", "C")
        rev = S.tukey_hsd({"C": c, "B": b, "A": a}).pair("C", "A")
        assert rev.diff == pytest.approx(-fwd.diff)
        assert rev.p_adj == pytest.approx(fwd.p_adj, abs=1e-12)
        assert (rev.lower, rev.upper) == pytest.approx((-fwd.upper, -fwd.lower))

    def test_balanced_fixture_matches_reference(self):
        groups = {"g1": [24.5, 23.5, 26.4, 27.1, 29.9], "g2": [28.4, 34.2, 29.5, 32.2, 30.1],
                  "g3": [26.1, 28.3, 24.3, 26.2, 27.8]}
        ours = S.tukey_hsd(groups)
        ref = sps.tukey_hsd(*groups.values())
        ci = ref.confidence_interval(0.95)
        for p, (i, j) in zip(ours.pairs, [(0, 1), (0, 2), (1, 2)]):
            assert round(p.p_adj, 3) == round(float(ref.pvalue[j, i]), 3)
            assert p.diff == pytest.approx(float(ref.statistic[j, i]))
            assert (p.lower, p.upper) == pytest.approx((float(ci.low[j, i]), float(ci.high[j, i])), abs=1e-6)
            assert p.lower <= p.diff <= p.upper

    def test_table_critical_value_gives_five_percent(self):
        # three groups of 11 leave 30 residual degrees of freedom
        se = math.sqrt(1.0 / 11)
        q = 3.486  # q(0.95; 3, 30) table value
        _, _, p = S.tukey_pair(q * se, 11, 11, 1.0, 30, 3)
        assert round(p, 3) == 0.050

    def test_published_anova_tail(self):
        # the published F is itself rounded to four significant digits
        assert S.f_sf(5.984, 2, 34) == pytest.approx(0.00594, abs=1e-5)

    def test_published_posthoc_rows(self):
        ms, df = 0.000961, 34
        rows = [  # (diff, n1, n2, lower, upper, p_adj) as published
            (0.0616, 5, 5, 0.013557, 0.109643, 0.0094695),
            (0.01418519, 5, 27, -0.02279834, 0.05116871, 0.6192293),
            (0.04741481, 27, 5, 0.01043129, 0.08439834, 0.0094774),
        ]
        for diff, n1, n2, lo, hi, p in rows:
            got = S.tukey_pair(diff, n1, n2, ms, df, 3)
            # the published mean square is rounded to three significant digits
            assert got == pytest.approx((lo, hi, p), abs=1e-4)

    def test_conservative_against_pooled_t(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            groups = random_groups(rng, k=int(rng.integers(3, 6)))
            res = S.tukey_hsd(groups)
            anova = S.anova_oneway(groups)
            for p in res.pairs:
                a, b = groups[int(p.group1) - 1], groups[int(p.group2) - 1]
                t = p.diff / math.sqrt(anova.ms_within * (1 / len(a) + 1 / len(b)))
                raw = 2 * sps.t.sf(abs(t), anova.df_within)
                assert p.p_adj >= raw - 1e-12

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            S.tukey_hsd([[1, 2], [3, 4]], alpha=1.5)

    def test_unknown_pair(self):
        with pytest.raises(KeyError):
            S.tukey_hsd([[1, 2], [3, 5]]).pair("1", "9")


class TestGrouping:
    def test_rank_groups(self):
        scores = {f"c{i:02d}": float(i) for i in range(12)}
        g = S.group_by_rank(scores, top=3, bottom=2)
        assert sorted(c for c, v in g.items() if v == "Top3") == ["c09", "c10", "c11"]
        assert sorted(c for c, v in g.items() if v == "Bottom2") == ["c00", "c01"]
        assert list(g.values()).count("Others") == 7

    def test_rank_ties_by_case_id(self):
        g = S.group_by_rank({"b": 1.0, "a": 1.0, "c": 0.0}, top=1, bottom=1)
        assert g == {"a": "Top1", "b": "Others", "c": "Bottom1"}

    def test_rank_too_many(self):
        with pytest.raises(ValueError):
            S.group_by_rank({"a": 1.0}, top=1, bottom=1)

    def test_quantile_groups(self):
        g = S.group_by_quantile({str(i): float(i) for i in range(1, 9)})
        assert [g[str(i)] for i in range(1, 9)] == ["<Q25", "<Q25", "Others", "Others", "Others", "Others",
                                                     ">Q75", ">Q75"]

    def test_stars(self):
        assert S.stars(0.01) == "*" and S.stars(0.05) == "" and S.stars(0.2) == ""
