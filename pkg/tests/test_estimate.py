import math

import numpy as np
import pytest

from survblend.combine import ComboParams, CombinedCurve, hb_combine
from survblend.estimate import (TrainingPair, TrainingSet, log_likelihood, minibs_estimate,
                                ml_estimate, training_ibs)
from survblend.evaluate import ibs
from survblend.exceptions import DegenerateFitError, DomainError, InsufficientHistoryError
from survblend.survcurve import CensoredTime, LogNormalCurve

from conftest import make_ensemble

DUMMY = make_ensemble([10.0, 20.0], [True, True], 60)


def synthetic_train(n, seed=0, censor_at=None, curves=None):
    """Pairs with truth from LogNormal(3.8, 0.5); source 1 exact, source 2 off."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    s1, s2 = curves or (LogNormalCurve(3.8, 0.5), LogNormalCurve(3.0, 0.25))
    pairs = []
    for i in range(n):
        t = math.exp(3.8 + 0.5 * rng.standard_normal())
        r = CensoredTime(censor_at, False) if censor_at and t > censor_at else CensoredTime(t, True)
        pairs.append(TrainingPair(i, (DUMMY, DUMMY), r, (s1, s2)))
    return TrainingSet(pairs)


def varied_train(n, seed=1):
    """Per-year source curves that move with a latent year effect."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    pairs = []
    for i in range(n):
        x1, x2 = 0.4 * rng.standard_normal(2)
        t = math.exp(3.8 + x1 + x2 + 0.4 * rng.standard_normal())
        r = CensoredTime(t, True) if t <= 120 else CensoredTime(120.0, False)
        f = (LogNormalCurve(3.8 + x1 + 0.05 * rng.standard_normal(), 0.57),
             LogNormalCurve(3.6 + x2 + 0.05 * rng.standard_normal(), 0.57))
        pairs.append(TrainingPair(i, (DUMMY, DUMMY), r, f))
    return TrainingSet(pairs)


def fd_loglik(params, train, h=1e-4):
    total = 0.0
    for p in train.pairs:
        c = CombinedCurve(params, list(p.fitted))
        t = p.realized.time
        if p.realized.event:
            total += math.log((c.cdf(t + h) - c.cdf(t - h)) / (2 * h))
        else:
            total += math.log(c.survival(t))
    return total


class TestTypes:
    def test_training_set(self):
        with pytest.raises(InsufficientHistoryError):
            TrainingSet([])
        a = TrainingPair(1, (DUMMY,), CensoredTime(5, True))
        b = TrainingPair(2, (DUMMY, DUMMY), CensoredTime(5, True))
        with pytest.raises(DomainError):
            TrainingSet([a, b])
        with pytest.raises(DomainError):
            TrainingPair(1, (DUMMY, DUMMY), CensoredTime(5, True), (LogNormalCurve(1, 1),))


class TestMaximumLikelihood:
    def test_identical_sources_flat(self):
        c = LogNormalCurve(3.8, 0.5)
        train = synthetic_train(50, curves=(c, c))
        l2 = log_likelihood(ComboParams("LP", omega=0.2), train)
        l8 = log_likelihood(ComboParams("LP", omega=0.8), train)
        assert abs(l2 - l8) <= 1e-9
        w = ml_estimate("lp", train).omega
        assert 0.0 <= w <= 1.0

    def test_consistency(self):
        est = ml_estimate("lp", synthetic_train(1000))
        assert est.omega > 0.9

    @pytest.mark.parametrize("method", ["LP", "BP", "GP", "GPt"])
    def test_analytic_matches_finite_difference(self, method):
        train = varied_train(40)
        rng = np.random.Generator(np.random.Philox(key=5))
        for _ in range(50):
            w = rng.uniform(0.05, 0.95)
            if method == "LP":
                p = ComboParams("LP", omega=w)
            elif method == "BP":
                p = ComboParams("BP", omega=w, alpha=rng.uniform(0.5, 3), beta=rng.uniform(0.5, 3))
            else:
                p = ComboParams(method, omega=w, mu=rng.uniform(-0.5, 0.5),
                                sigma=rng.uniform(0.5, 2.0),
                                df=19 if method == "GPt" else None)
            assert log_likelihood(p, train) == pytest.approx(fd_loglik(p, train), abs=1e-5)

    def test_censored_realizations_use_survival(self):
        train = synthetic_train(30, censor_at=50.0)
        assert any(not p.realized.event for p in train.pairs)
        p = ComboParams("GP", omega=0.6, mu=0.1, sigma=1.2)
        assert log_likelihood(p, train) == pytest.approx(fd_loglik(p, train), abs=1e-5)

    def test_gradient_descent_direction(self):
        train = varied_train(40)
        rng = np.random.Generator(np.random.Philox(key=8))

        def nll(v):
            return -log_likelihood(ComboParams("GP", omega=v[0], mu=v[1], sigma=v[2]), train)

        for _ in range(20):
            v = np.array([rng.uniform(0.2, 0.8), rng.uniform(-0.3, 0.3), rng.uniform(0.7, 1.5)])
            g = np.array([(nll(v + d) - nll(v - d)) / 2e-6 for d in np.eye(3) * 1e-6])
            step = 1e-4 * g / np.linalg.norm(g)
            assert nll(v - step) < nll(v)

    def test_restrictions_exact(self):
        train = varied_train(40)
        gp1 = ml_estimate("gp1", train)
        assert gp1.mu == 0.0 and gp1.sigma == 1.0
        gp2 = ml_estimate("gp2", train)
        assert gp2.mu == 0.0 and gp2.sigma != 1.0
        bp2 = ml_estimate("bp2", train)
        assert bp2.alpha == bp2.beta
        res = ml_estimate("lp0", train, full_output=True)
        assert res.params.omega == 0.5 and res.nfev == 0

    @pytest.mark.parametrize("name", ["lp", "bp3", "gp3", "gp1", "gp2", "bp2"])
    def test_likelihood_improves_on_start(self, name):
        train = varied_train(40)
        est = ml_estimate(name, train)
        start = est.with_values(omega=0.5, alpha=1.0, beta=1.0, mu=0.0, sigma=1.0)
        assert log_likelihood(est, train) >= log_likelihood(start, train)

    def test_gpt_uses_gp_fit(self):
        train = varied_train(25)
        gp = ml_estimate("gp3", train)
        gpt = ml_estimate("gpt", train)
        assert gpt.method == "GPt" and gpt.df == 24
        assert (gpt.omega, gpt.mu, gpt.sigma) == (gp.omega, gp.mu, gp.sigma)
        tfit = ml_estimate("gpt", train, gpt_likelihood="t")
        assert log_likelihood(tfit, train) >= log_likelihood(gpt, train) - 1e-9

    def test_all_censored(self):
        with pytest.raises(DegenerateFitError):
            ml_estimate("lp", synthetic_train(20, censor_at=1.0))

    def test_step_sources_rejected(self):
        from survblend.survcurve import km_estimate
        k = km_estimate(DUMMY)
        train = TrainingSet([TrainingPair(0, (DUMMY, DUMMY), CensoredTime(15, True), (k, k))])
        with pytest.raises(DomainError):
            ml_estimate("lp", train)

    def test_deterministic_multistart(self):
        train = varied_train(12)
        a = ml_estimate("bp3", train, full_output=True)
        b = ml_estimate("bp3", train, full_output=True)
        assert a.params == b.params and a.objective == b.objective


class TestMinIBS:
    def test_hb_identical_sources_flat(self):
        rng = np.random.default_rng(3)
        pairs = []
        for i in range(15):
            t = np.exp(rng.normal(3.8, 0.5, 12))
            e = t <= 60
            ens = make_ensemble(np.where(e, t, 60.0), e, 60)
            pairs.append(TrainingPair(i, (ens, ens), CensoredTime(float(rng.uniform(20, 90)), True)))
        train = TrainingSet(pairs)
        a = training_ibs(ComboParams("HB", omega=0.1), train, 120)
        b = training_ibs(ComboParams("HB", omega=0.9), train, 120)
        assert abs(a - b) <= 1e-9
        assert 0.0 <= minibs_estimate("hb", train, 120).omega <= 1.0

    def test_hb_objective_matches_curve_scores(self):
        rng = np.random.default_rng(4)
        pairs = []
        for i in range(10):
            t1, t2 = np.exp(rng.normal(3.8, 0.5, 10)), np.exp(rng.normal(3.5, 0.5, 8))
            e1, e2 = t1 <= 120, t2 <= 60
            pairs.append(TrainingPair(i, (make_ensemble(np.where(e1, t1, 120.0), e1, 120),
                                          make_ensemble(np.where(e2, t2, 60.0), e2, 60)),
                                      CensoredTime(float(rng.uniform(5, 110)), True)))
        train = TrainingSet(pairs)
        p = ComboParams("HB", omega=0.35)
        direct = np.mean([ibs(hb_combine(*q.ensembles, 0.35), q.realized, 120) for q in pairs])
        assert training_ibs(p, train, 120) == pytest.approx(direct, rel=1e-12)

    def test_lp_consistency_and_agreement(self):
        train = synthetic_train(1000)
        w_ibs = minibs_estimate("lp", train, 120).omega
        w_ml = ml_estimate("lp", train).omega
        assert w_ibs > 0.9 and abs(w_ibs - w_ml) < 0.05

    def test_lp_grid_oracle(self):
        train = varied_train(60)
        est = minibs_estimate("lp", train, 120)
        got = training_ibs(est, train, 120)
        for w in np.linspace(0, 1, 101):
            assert got <= training_ibs(ComboParams("LP", omega=float(w)), train, 120) + 1e-10

    @pytest.mark.parametrize("name", ["bp3", "gp3"])
    def test_improves_on_start(self, name):
        train = varied_train(40)
        est = minibs_estimate(name, train, 120)
        start = est.with_values(omega=0.5, alpha=1.0, beta=1.0, mu=0.0, sigma=1.0)
        assert training_ibs(est, train, 120) <= training_ibs(start, train, 120)

    def test_gpt_rejected(self):
        with pytest.raises(DomainError):
            minibs_estimate("gpt", varied_train(10), 120)
