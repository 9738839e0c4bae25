import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from survblend.combine import (ComboParams, CombinedCurve, bp_combine, combine, gp_combine,
                               gpt_combine, hb_combine, lp0_combine, lp_combine, merge_combine,
                               pool_gp)
from survblend.exceptions import DomainError, EmptyEnsembleError
from survblend.survcurve import LogNormalCurve, StepCurve, km_estimate, lognormal_ml_fit

from conftest import make_ensemble

GRID = np.arange(1.0, 121.0)
F1 = LogNormalCurve(3.6, 0.5)
F2 = LogNormalCurve(4.0, 0.35)


class FixedCDF(StepCurve):
    """Curve with prescribed CDF values at one evaluation time."""

    def __init__(self, F):
        super().__init__([10.0], [1.0 - F])


def gp_oracle(omega, mu, sigma, Fa, Fb, df=None):
    z = (omega * stats.norm.ppf(Fa) + (1 - omega) * stats.norm.ppf(Fb) - mu) / sigma
    return stats.norm.sf(z) if df is None else stats.t.sf(z, df)


class TestParams:
    def test_validation(self):
        with pytest.raises(DomainError):
            ComboParams("XX")
        with pytest.raises(DomainError):
            ComboParams("LP", omega=1.2)
        with pytest.raises(DomainError):
            ComboParams("LP", restriction="fix_mean")
        with pytest.raises(DomainError):
            ComboParams("BP", alpha=2.0, beta=3.0, restriction="fix_alpha_eq_beta")
        with pytest.raises(DomainError):
            ComboParams("GP", mu=0.1, restriction="fix_mean")
        with pytest.raises(DomainError):
            ComboParams("GP", sigma=0.0)
        with pytest.raises(DomainError):
            ComboParams("GPt", df=0)
        assert ComboParams("GP", sigma=1.0, restriction="fix_mean_var").mu == 0.0


class TestLinearPool:
    def test_degenerate_weight(self):
        assert np.array_equal(lp_combine(F1, F2, 1.0).survival(GRID), F1.survival(GRID))
        assert np.allclose(lp_combine(F1, F2, 0.0).survival(GRID), F2.survival(GRID), atol=1e-16)

    def test_identical_sources(self):
        assert np.allclose(lp_combine(F1, F1, 0.5).survival(GRID), F1.survival(GRID), atol=1e-16)

    def test_arithmetic(self):
        c = lp_combine(FixedCDF(0.2), FixedCDF(0.6), 0.3)
        assert c.survival(10.0) == pytest.approx(0.52, abs=1e-15)

    def test_density(self):
        c = lp_combine(F1, F2, 0.3)
        assert c.density(40.0) == pytest.approx(0.3 * F1.density(40.0) + 0.7 * F2.density(40.0))

    def test_lp0(self):
        c = lp0_combine(F1, F2)
        assert c.params.omega == 0.5
        assert np.allclose(c.survival(GRID), lp_combine(F1, F2, 0.5).survival(GRID), atol=0)


class TestBetaPool:
    def test_reduces_to_lp(self):
        a = bp_combine(F1, F2, 0.37, 1.0, 1.0).survival(GRID)
        b = lp_combine(F1, F2, 0.37).survival(GRID)
        assert np.max(np.abs(a - b)) <= 1e-12

    def test_unit_weight(self):
        assert np.max(np.abs(bp_combine(F1, F2, 1.0, 1.0, 1.0).survival(GRID)
                             - F1.survival(GRID))) <= 1e-12

    def test_symmetric_beta(self):
        c = bp_combine(FixedCDF(0.5), FixedCDF(0.5), 0.5, 2.0, 2.0)
        assert c.survival(10.0) == pytest.approx(0.5, abs=1e-14)

    def test_against_scipy(self):
        c = bp_combine(F1, F2, 0.4, 2.5, 0.8)
        u = 0.4 * F1.cdf(GRID) + 0.6 * F2.cdf(GRID)
        assert np.allclose(c.survival(GRID), stats.beta.sf(u, 2.5, 0.8), atol=1e-12)

    def test_density_chain_rule(self):
        c = bp_combine(F1, F2, 0.4, 2.5, 0.8)
        h = 1e-4
        for t in (15.0, 40.0, 90.0):
            fd = -(c.survival(t + h) - c.survival(t - h)) / (2 * h)
            assert c.density(t) == pytest.approx(fd, abs=1e-7)


class TestGeneralizedPool:
    def test_identity(self):
        c = gp_combine(F1, F2, 1.0, 0.0, 1.0)
        assert np.max(np.abs(c.survival(GRID) - F1.survival(GRID))) < 1e-12

    @pytest.mark.parametrize("omega,sigma", [(0.1, 0.3), (0.5, 1.0), (0.9, 4.0)])
    def test_median_fixed_point(self, omega, sigma):
        c = gp_combine(FixedCDF(0.5), FixedCDF(0.5), omega, 0.0, sigma)
        assert c.survival(10.0) == pytest.approx(0.5, abs=1e-15)

    def test_oracle(self):
        c = gp_combine(FixedCDF(0.3), FixedCDF(0.7), 0.79, 0.22, 0.92)
        assert c.survival(10.0) == pytest.approx(gp_oracle(0.79, 0.22, 0.92, 0.3, 0.7), abs=1e-12)

    def test_boundary_saturation(self):
        # 1 - 1e-12 is not exactly representable, so opposite clamps cancel only to ~1e-6
        c = gp_combine(FixedCDF(0.0), FixedCDF(1.0), 0.5, 0.0, 1.0)
        assert c.survival(10.0) == pytest.approx(0.5, abs=1e-5)
        c = gp_combine(FixedCDF(0.0), FixedCDF(0.0), 0.5, 0.0, 1.0)
        assert c.survival(10.0) == pytest.approx(1.0, abs=1e-11)
        c = gp_combine(FixedCDF(1.0), FixedCDF(1.0), 0.5, 0.0, 1.0)
        assert c.survival(10.0) == pytest.approx(0.0, abs=1e-11)

    def test_density_against_finite_difference(self):
        c = gp_combine(F1, F2, 0.3, 0.4, 1.7)
        h = 1e-4
        for t in (12.0, 50.0, 100.0):
            fd = -(c.survival(t + h) - c.survival(t - h)) / (2 * h)
            assert c.density(t) == pytest.approx(fd, abs=1e-7)

    def test_monotone_for_varied_sigma(self):
        fine = np.linspace(0.1, 400, 1000)
        for sigma in (0.05, 0.4, 1.0, 3.0, 25.0):
            for mu in (-1.5, 0.0, 2.0):
                s = gp_combine(F1, F2, 0.35, mu, sigma).survival(fine)
                assert np.all(np.diff(s) <= 0)


class TestStudentPool:
    def test_normal_limit(self):
        a = gpt_combine(F1, F2, 0.3, 0.2, 0.8, 10 ** 6).survival(GRID)
        b = gp_combine(F1, F2, 0.3, 0.2, 0.8).survival(GRID)
        assert np.max(np.abs(a - b)) < 1e-4

    def test_median(self):
        assert gpt_combine(FixedCDF(0.5), FixedCDF(0.2), 1.0, 0.0, 1.0, 19).survival(10.0) == \
            pytest.approx(0.5, abs=1e-15)

    def test_oracle(self):
        c = gpt_combine(FixedCDF(0.3), FixedCDF(0.7), 0.79, 0.22, 0.92, 19)
        assert c.survival(10.0) == pytest.approx(gp_oracle(0.79, 0.22, 0.92, 0.3, 0.7, df=19),
                                                 abs=1e-10)

    def test_df_domain(self):
        with pytest.raises(DomainError):
            gpt_combine(F1, F2, 0.5, 0.0, 1.0, 0)

    def test_density(self):
        c = gpt_combine(F1, F2, 0.6, -0.1, 1.3, 7)
        h = 1e-4
        for t in (20.0, 70.0):
            fd = -(c.survival(t + h) - c.survival(t - h)) / (2 * h)
            assert c.density(t) == pytest.approx(fd, abs=1e-7)


class TestHazardBlend:
    E1 = make_ensemble([10, 20, 35, 50, 60, 60], [1, 1, 1, 1, 0, 0], 60)
    E2 = make_ensemble([10, 30, 30, 45], [1, 1, 1, 0], 45)

    def test_unit_weight_is_km(self):
        a = hb_combine(self.E1, self.E2, 1.0)
        b = km_estimate(self.E1)
        assert np.array_equal(a.jump_times, b.jump_times)
        assert np.array_equal(a.surv_values, b.surv_values)

    def test_identical_ensembles(self):
        for w in (0.0, 0.3, 0.77):
            a = hb_combine(self.E1, self.E1, w)
            b = km_estimate(self.E1)
            assert np.array_equal(a.jump_times, b.jump_times)
            assert np.allclose(a.surv_values, b.surv_values, atol=1e-15)

    def test_hand_example(self):
        e1 = make_ensemble([10, 20], [1, 1], 60)
        e2 = make_ensemble([10, 30], [1, 1], 60)
        c = hb_combine(e1, e2, 0.5)
        # t=10: (0.5+0.5)/(1+1)=0.5; t=20: 0.5/(0.5*1+0.5*1)=0.5; t=30: 0.5/(0+0.5)=1
        assert list(c.jump_times) == [10.0, 20.0, 30.0]
        assert c.surv_values == pytest.approx([0.5, 0.25, 0.0])

    def test_general_hand_values(self):
        w = 0.3
        c = hb_combine(self.E1, self.E2, w)
        lam10 = (w * 1 + (1 - w) * 1) / (w * 6 + (1 - w) * 4)
        lam20 = (w * 1) / (w * 5 + (1 - w) * 3)
        lam30 = ((1 - w) * 2) / (w * 4 + (1 - w) * 3)
        assert c.survival(10) == pytest.approx(1 - lam10)
        assert c.survival(20) == pytest.approx((1 - lam10) * (1 - lam20))
        assert c.survival(30) == pytest.approx((1 - lam10) * (1 - lam20) * (1 - lam30))

    def test_empty(self):
        with pytest.raises(EmptyEnsembleError):
            hb_combine((np.zeros(0), np.zeros(0, bool)), self.E2, 0.5)

    def test_dispatch(self):
        c = combine(ComboParams("HB", omega=0.4), ens1=self.E1, ens2=self.E2)
        assert np.array_equal(c.surv_values, hb_combine(self.E1, self.E2, 0.4).surv_values)


class TestMerge:
    def test_duplicate(self, rng):
        t = np.exp(rng.normal(3.5, 0.5, 20))
        e = t <= 60
        ens = (np.where(e, t, 60.0), e)
        a, b = merge_combine(ens, ens), lognormal_ml_fit(ens)
        assert a.xi == pytest.approx(b.xi, abs=1e-6) and a.tau == pytest.approx(b.tau, abs=1e-6)

    def test_pooled_closed_form(self, rng):
        t1, t2 = np.exp(rng.normal(3, 0.5, 15)), np.exp(rng.normal(3.5, 0.3, 9))
        c = merge_combine((t1, np.ones(15, bool)), (t2, np.ones(9, bool)))
        y = np.log(np.concatenate([t1, t2]))
        assert c.xi == pytest.approx(y.mean(), abs=1e-7)
        assert c.tau == pytest.approx(y.std(), abs=1e-7)


def test_flexible_dispersivity():
    # Y from F0 = LogNormal(3.8, 0.5); sources fixed and biased differently
    rng = np.random.Generator(np.random.Philox(key=99))
    y = np.exp(3.8 + 0.5 * rng.standard_normal(100_000))
    s1, s2 = LogNormalCurve(3.6, 0.6), LogNormalCurve(4.1, 0.4)
    F = [s1.cdf(y), s2.cdf(y)]
    w = (0.4, 0.6)
    wide = 1.0 - pool_gp(w, 0.0, 100.0, F)
    med = math.exp(3.8)
    mu0 = w[0] * stats.norm.ppf(s1.cdf(med)) + w[1] * stats.norm.ppf(s2.cdf(med))
    sharp = 1.0 - pool_gp(w, mu0, 1e-3, F)
    assert np.var(wide) < 0.005
    assert np.var(sharp) > 0.24


def test_multi_source_weights():
    c = CombinedCurve(ComboParams("LP"), [F1, F2, LogNormalCurve(3.0, 1.0)], (0.2, 0.3, 0.5))
    ref = 0.2 * F1.survival(GRID) + 0.3 * F2.survival(GRID) + 0.5 * LogNormalCurve(3, 1).survival(GRID)
    assert np.allclose(c.survival(GRID), ref, atol=1e-15)
    with pytest.raises(DomainError):
        CombinedCurve(ComboParams("LP"), [F1, F2], (0.5, 0.6))


@given(method=st.sampled_from(["LP", "BP", "GP", "GPt"]), omega=st.floats(0, 1),
       a=st.floats(0.1, 20), b=st.floats(0.1, 20), mu=st.floats(-3, 3), sigma=st.floats(0.05, 20),
       xi1=st.floats(2, 5), xi2=st.floats(2, 5), t1=st.floats(0.1, 1.5), t2=st.floats(0.1, 1.5))
@settings(max_examples=150, deadline=None)
def test_combined_curves_monotone(method, omega, a, b, mu, sigma, xi1, xi2, t1, t2):
    p = {"LP": ComboParams("LP", omega=omega),
         "BP": ComboParams("BP", omega=omega, alpha=a, beta=b),
         "GP": ComboParams("GP", omega=omega, mu=mu, sigma=sigma),
         "GPt": ComboParams("GPt", omega=omega, mu=mu, sigma=sigma, df=5)}[method]
    c = CombinedCurve(p, [LogNormalCurve(xi1, t1), LogNormalCurve(xi2, t2)])
    s = c.survival(np.linspace(0.01, 1000, 1000))
    assert np.all(np.diff(s) <= 1e-15)
    assert np.all((s >= 0) & (s <= 1))


@given(st.lists(st.tuples(st.integers(1, 60), st.booleans()), min_size=1, max_size=20),
       st.lists(st.tuples(st.integers(1, 60), st.booleans()), min_size=1, max_size=20),
       st.floats(0, 1))
@settings(max_examples=150, deadline=None)
def test_hb_is_step_survival(m1, m2, omega):
    a = (np.array([m[0] for m in m1], float), np.array([m[1] for m in m1]))
    b = (np.array([m[0] for m in m2], float), np.array([m[1] for m in m2]))
    c = hb_combine(a, b, omega)
    assert np.all(np.diff(c.surv_values) <= 0)
    assert np.all((c.surv_values >= 0) & (c.surv_values <= 1))
    if omega == 1.0:
        k = km_estimate(a)
        assert np.allclose(c.survival(np.arange(62)), k.survival(np.arange(62)), atol=0)
