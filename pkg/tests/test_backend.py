"""Parity between the compiled kernels and the pure-Python fallback."""
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survblend import _backend
from survblend.estimate import hb_ibs_data, ibs_data, ml_data

from test_estimate import varied_train

PY = _backend.get_kernels("python")
try:
    C = _backend.get_kernels("compiled")
except ImportError:  # pragma: no cover - depends on the build
    C = None

needs_compiled = pytest.mark.skipif(C is None, reason="compiled kernels not built")


def test_backend_names():
    assert PY.BACKEND == "python"
    assert _backend.BACKEND in ("python", "compiled")
    with pytest.raises(ValueError):
        _backend.get_kernels("fortran")


def test_env_forces_fallback():
    env = dict(os.environ, SURVBLEND_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import survblend._backend as b; print(b.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
class TestParity:
    def setup_method(self):
        self.rng = np.random.default_rng(99)

    def test_specfun(self):
        x = np.concatenate([self.rng.normal(0, 5, 2000), [-40.0, -8.3, 0.0, 8.3, 40.0]])
        assert np.allclose(C.ndtr(x), PY.ndtr(x), rtol=1e-14, atol=0)
        assert np.allclose(C.log_ndtr(x), PY.log_ndtr(x), rtol=1e-13, atol=1e-300)
        p = np.concatenate([self.rng.random(2000), [1e-300, 1e-20, 0.5, 1 - 1e-12]])
        assert np.allclose(C.ndtri(p), PY.ndtri(p), rtol=1e-12, atol=1e-14)
        u = self.rng.random(500)
        for a, b in [(0.3, 0.7), (1.0, 1.0), (2.5, 1.7), (40.0, 3.0)]:
            assert np.allclose(C.betaincc(a, b, u, 1 - u), PY.betaincc(a, b, u, 1 - u),
                               rtol=1e-11, atol=1e-15)
            assert np.allclose(C.beta_logpdf(a, b, u, 1 - u), PY.beta_logpdf(a, b, u, 1 - u),
                               rtol=1e-11, atol=1e-12)
        for df in (1.0, 4.0, 19.0, 500.0):
            assert np.allclose(C.stdtr(df, x), PY.stdtr(df, x), rtol=1e-11, atol=1e-15)
            assert np.allclose(C.t_logpdf(df, x), PY.t_logpdf(df, x), rtol=1e-11)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 30), st.booleans()), min_size=1, max_size=40))
    def test_km_and_hb_counts(self, members):
        t = np.array([m[0] for m in members], float)
        e = np.array([m[1] for m in members])
        for a, b in zip(C.km_steps(t, e), PY.km_steps(t, e)):
            assert np.allclose(a, b, rtol=1e-15)
        t2, e2 = t[::-1] + 0.5, ~e
        for a, b in zip(C.hb_counts(t, e, t2, e2), PY.hb_counts(t, e, t2, e2)):
            assert np.array_equal(a, b)

    def test_lognormal_fits(self):
        T = np.exp(3.8 + 0.5 * self.rng.normal(size=(50, 30)))
        E = T <= 90.0
        T = np.where(E, T, 90.0)
        xc, tc, sc = C.fit_lognormal_batch(T, E, 0.01, 1e-8, 5000)
        xp, tp, sp = PY.fit_lognormal_batch(T, E, 0.01, 1e-8, 5000)
        assert np.array_equal(sc, sp)
        assert np.allclose(xc, xp, atol=1e-6) and np.allclose(tc, tp, atol=1e-6)
        assert C.lognormal_negloglik(T[0], E[0], 3.7, 0.4) == \
            pytest.approx(PY.lognormal_negloglik(T[0], E[0], 3.7, 0.4), rel=1e-12)

    def test_objectives(self):
        train = varied_train(25)
        ml = ml_data(train)
        ib = ibs_data(train, 120)
        ens = []
        for i in range(10):
            a = np.round(np.exp(3.8 + 0.4 * self.rng.normal(size=12)))
            b = np.round(np.exp(3.7 + 0.5 * self.rng.normal(size=8)))
            ens.append((np.minimum(a, 120), a <= 120, np.minimum(b, 60), b <= 60))
        hb = hb_ibs_data(ens, np.full(10, 45.0), np.ones(10, bool), 120)
        cases = [("lp_ml", ml), ("bp_ml", ml), ("gp_ml", ml), ("gpt_ml", ml), ("lp_ibs", ib),
                 ("bp_ibs", ib), ("gp_ibs", ib), ("hb_ibs", hb)]
        for kind, data in cases:
            for params in [(0.3, 1.2, 0.8), (0.9, 0.1, 1.5), (0.5, 2.0, 3.0)]:
                a = C.combo_objective(kind, data, params)
                b = PY.combo_objective(kind, data, params)
                assert a == pytest.approx(b, rel=1e-10), kind

    def test_optimizer(self):
        f = lambda v: (v[0] - 1.0) ** 2 + 3 * (v[1] + 2.0) ** 2 + math.sin(v[0])  # noqa: E731
        a = C.nelder_mead(f, [0.0, 0.0], [0.5, 0.5], 1e-10, 1e-10, 5000)
        b = PY.nelder_mead(f, [0.0, 0.0], [0.5, 0.5], 1e-10, 1e-10, 5000)
        assert np.allclose(a[0], b[0], atol=1e-6) and a[1] == pytest.approx(b[1], abs=1e-12)
