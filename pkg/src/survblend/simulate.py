"""Monte Carlo study of combined survival forecasts.

Each year has two latent components ``x1 ~ N(0, tau1^2)`` and
``x2 ~ N(0, tau2^2)``. The realized time is LogNormal(xi0 + x1 + x2, tau0^2);
source 1 draws members from LogNormal(xi0 + x1, tau0^2 + tau2^2) and source 2
from LogNormal(xi0 + x2 + shift, tau0^2 + tau1^2). Members beyond a source's
lead time are censored there, the truth at ``truth_horizon``.

Every simulated year owns a counter-based Philox stream keyed by
``(seed, scenario, role, index)``; all variates come from its uniforms by
inversion, so any subset of years or methods reproduces the same numbers.
"""
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import registry
from ._backend import kernels as _k
from .combine import ComboParams, hb_steps, pool_bp, pool_gp, pool_lp
from .estimate import hb_ibs_data, layout, optimize_params
from .evaluate import brier_targets, day_grid, randomized_pit, score_report
from .exceptions import ConvergenceError, DegenerateFitError, DomainError
from .survcurve import CensoredTime, Ensemble, FIT_MAXITER, FIT_TOL, TAU_MIN

XI0_DEFAULT = math.log(45.0)
BALANCED_TAUS = (0.4, 0.4, 0.4)
UNBALANCED_TAUS = (0.53, 0.4, 0.2)
BIAS_SHIFT = -0.5

ROLE_TRAIN, ROLE_TEST, ROLE_REPLICATION = 1, 2, 3
N_PIT_UNIFORMS = len(registry.REGISTRY)
_UNIFORM_OFFSET = 2.0 ** -54
CHUNK_YEARS = 2500
SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of one simulation scenario."""

    id: int
    n_train: int
    balanced: bool
    biased: bool
    n1: int
    n2: int
    tau0: float
    tau1: float
    tau2: float
    xi0: float = XI0_DEFAULT
    lead1: float = 120.0
    lead2: float = 60.0
    bias_shift: float = 0.0
    n_test: int = 10_000
    n_replications: int = 1
    truth_horizon: float = 120.0
    t_max: int = 120

    def __post_init__(self):
        if min(self.tau0, self.tau1, self.tau2) < 0 or self.tau0 <= 0:
            raise DomainError("tau0 must be positive and tau1, tau2 nonnegative")
        if min(self.n1, self.n2, self.n_train, self.n_test, self.n_replications) < 1:
            raise DomainError("sizes and counts must be positive")
        if min(self.lead1, self.lead2, self.truth_horizon) <= 0:
            raise DomainError("lead times must be positive")

    @property
    def large(self):
        return self.n_replications == 1

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def scenario_config(scenario_id, **overrides):
    """Default configuration of scenario 1..16, with optional field overrides."""
    if not (isinstance(scenario_id, (int, np.integer)) and 1 <= scenario_id <= 16):
        raise DomainError(f"scenario id must be in 1..16, got {scenario_id!r}")
    k = (scenario_id - 1) % 8
    large = scenario_id <= 8
    balanced = k < 4
    biased = k in (2, 3, 6, 7)
    n1 = 100 if scenario_id % 2 == 1 else 20
    tau0, tau1, tau2 = BALANCED_TAUS if balanced else UNBALANCED_TAUS
    cfg = ScenarioConfig(
        id=int(scenario_id), n_train=1000 if large else 20, balanced=balanced, biased=biased,
        n1=n1, n2=20, tau0=tau0, tau1=tau1, tau2=tau2,
        bias_shift=BIAS_SHIFT if biased else 0.0,
        n_test=10_000 if large else 1, n_replications=1 if large else 10_000)
    return replace(cfg, **overrides) if overrides else cfg


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def year_key(seed, scenario_id, role, index):
    """128-bit Philox key of one simulated year."""
    if not (0 <= seed < 2 ** 64 and 0 <= index < 2 ** 48):
        raise DomainError("seed or index out of range")
    return (int(seed) << 64) | (int(scenario_id) << 56) | (int(role) << 48) | int(index)


def year_uniforms(seed, scenario_id, role, index, size):
    """Uniforms in (0, 1) from the stream of one year."""
    rng = np.random.Generator(np.random.Philox(key=year_key(seed, scenario_id, role, index)))
    return rng.random(size) + _UNIFORM_OFFSET


@dataclass
class YearBlock:
    """Arrays for ``m`` simulated years."""

    x1: np.ndarray
    x2: np.ndarray
    truth_t: np.ndarray
    truth_e: np.ndarray
    T1: np.ndarray
    E1: np.ndarray
    T2: np.ndarray
    E2: np.ndarray
    U: np.ndarray = field(repr=False)

    def __len__(self):
        return self.x1.size

    def take(self, idx):
        return YearBlock(*(getattr(self, f.name)[idx] for f in fields(self)))


def _censor(times, horizon):
    ev = times <= horizon
    return np.where(ev, times, horizon), ev


def simulate_block(cfg, seed, role, indices):
    """Simulate the years with the given stream indices."""
    indices = np.asarray(indices, dtype=np.int64)
    n1, n2 = cfg.n1, cfg.n2
    size = 3 + n1 + n2 + N_PIT_UNIFORMS
    U = np.empty((indices.size, size))
    for r, i in enumerate(indices):
        U[r] = year_uniforms(seed, cfg.id, role, int(i), size)
    Z = _k.ndtri(U[:, :3 + n1 + n2])
    x1 = cfg.tau1 * Z[:, 0]
    x2 = cfg.tau2 * Z[:, 1]
    truth = np.exp(cfg.xi0 + x1 + x2 + cfg.tau0 * Z[:, 2])
    s1 = math.sqrt(cfg.tau0 ** 2 + cfg.tau2 ** 2)
    s2 = math.sqrt(cfg.tau0 ** 2 + cfg.tau1 ** 2)
    y = np.exp(cfg.xi0 + x1[:, None] + s1 * Z[:, 3:3 + n1])
    z = np.exp(cfg.xi0 + x2[:, None] + cfg.bias_shift + s2 * Z[:, 3 + n1:])
    tt, te = _censor(truth, cfg.truth_horizon)
    T1, E1 = _censor(y, cfg.lead1)
    T2, E2 = _censor(z, cfg.lead2)
    return YearBlock(x1, x2, tt, te, T1, E1, T2, E2, U[:, 3 + n1 + n2:])


@dataclass(frozen=True)
class SimulatedYear:
    x1: float
    x2: float
    truth: CensoredTime
    ens1: Ensemble
    ens2: Ensemble


def simulate_year(cfg, seed, role=ROLE_TEST, index=0):
    """One simulated year as domain objects."""
    b = simulate_block(cfg, seed, role, [index])
    return SimulatedYear(
        float(b.x1[0]), float(b.x2[0]), CensoredTime(b.truth_t[0], b.truth_e[0]),
        Ensemble.from_arrays(b.T1[0], b.E1[0], cfg.lead1, "source1"),
        Ensemble.from_arrays(b.T2[0], b.E2[0], cfg.lead2, "source2"))


# ---------------------------------------------------------------------------
# source fits and training data
# ---------------------------------------------------------------------------

@dataclass
class FitBlock:
    xi1: np.ndarray
    tau1: np.ndarray
    xi2: np.ndarray
    tau2: np.ndarray
    ok: np.ndarray
    xim: np.ndarray = None
    taum: np.ndarray = None

    def take(self, idx):
        return FitBlock(*(None if getattr(self, f.name) is None else getattr(self, f.name)[idx]
                          for f in fields(self)))


def fit_block(block, merge=False):
    """Censored ML log-normal fits of both sources (and the merged sample)."""
    xi1, tau1, s1 = _k.fit_lognormal_batch(block.T1, block.E1, TAU_MIN, FIT_TOL, FIT_MAXITER)
    xi2, tau2, s2 = _k.fit_lognormal_batch(block.T2, block.E2, TAU_MIN, FIT_TOL, FIT_MAXITER)
    fb = FitBlock(xi1, tau1, xi2, tau2, (s1 != 1) & (s2 != 1))
    if merge:
        fb.xim, fb.taum, sm = _k.fit_lognormal_batch(
            np.hstack([block.T1, block.T2]), np.hstack([block.E1, block.E2]),
            TAU_MIN, FIT_TOL, FIT_MAXITER)
        fb.ok &= sm != 1
    return fb


def _ln_grid(xi, tau, logd):
    z = (logd[None, :] - xi[:, None]) / tau[:, None]
    return _k.ndtr(z), _k.ndtr(-z)


def _ln_point(xi, tau, t):
    z = (np.log(t) - xi) / tau
    return _k.ndtr(z), _k.ndtr(-z), np.exp(-0.5 * z * z) / (SQRT_2PI * tau * t)


def ml_arrays(fits, block, df=None):
    F1, S1, f1 = _ln_point(fits.xi1, fits.tau1, block.truth_t)
    F2, S2, f2 = _ln_point(fits.xi2, fits.tau2, block.truth_t)
    data = {"F1": F1, "F2": F2, "S1": S1, "S2": S2, "f1": f1, "f2": f2,
            "cens": (~block.truth_e).astype(np.float64)}
    data["df"] = float(len(block) - 1 if df is None else df)
    return data


def ibs_arrays(fits, block, days):
    logd = np.log(days)
    F1, S1 = _ln_grid(fits.xi1, fits.tau1, logd)
    F2, S2 = _ln_grid(fits.xi2, fits.tau2, logd)
    Y, W = brier_targets(block.truth_t, block.truth_e, days)
    return {"F1": F1, "F2": F2, "S1": S1, "S2": S2, "Y": Y, "W": W}


def hb_arrays(block, days):
    pairs = [(block.T1[i], block.E1[i], block.T2[i], block.E2[i]) for i in range(len(block))]
    return hb_ibs_data(pairs, block.truth_t, block.truth_e, days[-1], days[0] - 1)


@dataclass
class EstimationLog:
    nonconverged: int = 0
    failed: int = 0


def estimate_methods(names, fits, block, days, logs=None):
    """Estimate the combination parameters of ``names`` on a training block.

    Non-converged searches keep their best point and are counted; degenerate
    objectives give ``None``.
    """
    cache = {}
    fitted = {}
    out = {}
    n = len(block)
    for name in names:
        spec = registry.get(name)
        if not spec.is_combination or spec.estimator is None:
            continue
        template = spec.template
        if spec.estimator == "ml":
            if "ml" not in cache:
                cache["ml"] = ml_arrays(fits, block)
            data, dkey = cache["ml"], "ml"
            if template.method == "GPt" and template.df is None:
                template = template.with_values(df=n - 1)
                data = dict(data, df=float(n - 1))
            if np.all(data["cens"] == 1.0):
                out[name] = None
                if logs is not None:
                    logs[name].failed += 1
                continue
        elif template.method == "HB":
            if "hb" not in cache:
                cache["hb"] = hb_arrays(block, days)
            data, dkey = cache["hb"], "hb"
        else:
            if "ibs" not in cache:
                cache["ibs"] = ibs_arrays(fits, block, days)
            data, dkey = cache["ibs"], "ibs"
        key = (layout(template, spec.estimator), dkey)
        if key not in fitted:
            try:
                fitted[key] = (optimize_params(template, spec.estimator, data, n), False)
            except ConvergenceError as err:
                fitted[key] = (err.result, True)
            except DegenerateFitError:
                fitted[key] = (None, False)
        res, nonconv = fitted[key]
        if res is None:
            out[name] = None
            if logs is not None:
                logs[name].failed += 1
            continue
        # identical searches (GP3 and GP3-t) share one fit
        out[name] = _retag(template, res.params)
        if nonconv and logs is not None:
            logs[name].nonconverged += 1
    return out


def _retag(template, params):
    if template.method == params.method:
        return params
    return template.with_values(omega=params.omega, mu=params.mu, sigma=params.sigma)


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

def _step_eval(jt, sv, days, t):
    table = np.concatenate(([1.0], sv))
    return (table[np.searchsorted(jt, days, side="right")],
            table[np.searchsorted(jt, t, side="right")],
            table[np.searchsorted(jt, t, side="left")])


def _col(params, attr, m):
    return np.array([getattr(p, attr) for p in params], dtype=np.float64).reshape(m, 1)


def method_survival(name, params, fits, block, days, cache):
    """Survival on the day grid and at the realized time (right and left limits).

    ``params`` is a list with one ComboParams per year (or None for sources).
    """
    m = len(block)
    t = block.truth_t
    logd = np.log(days)
    logt = np.log(t)[:, None]

    def grids():
        if "grid" not in cache:
            F1g, S1g = _ln_grid(fits.xi1, fits.tau1, logd)
            F2g, S2g = _ln_grid(fits.xi2, fits.tau2, logd)
            cache["grid"] = (F1g, S1g, F2g, S2g)
            z1 = (logt - fits.xi1[:, None]) / fits.tau1[:, None]
            z2 = (logt - fits.xi2[:, None]) / fits.tau2[:, None]
            cache["point"] = (_k.ndtr(z1), _k.ndtr(-z1), _k.ndtr(z2), _k.ndtr(-z2))
        return cache["grid"], cache["point"]

    if name in ("source1", "source2", "merge"):
        xi, tau = {"source1": (fits.xi1, fits.tau1), "source2": (fits.xi2, fits.tau2),
                   "merge": (fits.xim, fits.taum)}[name]
        _, Sg = _ln_grid(xi, tau, logd)
        St = _k.ndtr(-(logt[:, 0] - xi) / tau)
        return Sg, St, St
    if name in ("source1_km", "source2_km"):
        T, E = (block.T1, block.E1) if name == "source1_km" else (block.T2, block.E2)
        Sg = np.empty((m, days.size))
        St = np.empty(m)
        Sl = np.empty(m)
        for i in range(m):
            jt, sv = _k.km_steps(T[i], E[i])
            Sg[i], St[i], Sl[i] = _step_eval(jt, sv, days, t[i])
        return Sg, St, Sl
    if name == "hb":
        Sg = np.empty((m, days.size))
        St = np.empty(m)
        Sl = np.empty(m)
        for i in range(m):
            jt, sv = hb_steps(block.T1[i], block.E1[i], block.T2[i], block.E2[i], params[i].omega)
            Sg[i], St[i], Sl[i] = _step_eval(jt, sv, days, t[i])
        return Sg, St, Sl

    (F1g, S1g, F2g, S2g), (F1t, S1t, F2t, S2t) = grids()
    method = params[0].method
    w = _col(params, "omega", m)
    wts = (w, 1.0 - w)
    if method in ("LP", "LP0"):
        Sg = pool_lp(wts, [S1g, S2g])
        St = pool_lp(wts, [S1t, S2t])
    elif method in ("GP", "GPt"):
        mu, sig = _col(params, "mu", m), _col(params, "sigma", m)
        if method == "GP":
            Sg = pool_gp(wts, mu, sig, [F1g, F2g])
            St = pool_gp(wts, mu, sig, [F1t, F2t])
        else:
            Sg = np.empty((m, days.size))
            St = np.empty((m, 1))
            dfs = np.array([p.df for p in params])
            for df in np.unique(dfs):
                r = dfs == df
                wr = (w[r], 1.0 - w[r])
                Sg[r] = pool_gp(wr, mu[r], sig[r], [F1g[r], F2g[r]], df=df)
                St[r] = pool_gp(wr, mu[r], sig[r], [F1t[r], F2t[r]], df=df)
    elif method == "BP":
        Sg = np.empty((m, days.size))
        St = np.empty((m, 1))
        keys = [(p.omega, p.alpha, p.beta) for p in params]
        for key in dict.fromkeys(keys):
            r = np.array([k == key for k in keys])
            om, a, b = key
            Sg[r] = pool_bp((om, 1.0 - om), a, b, [F1g[r], F2g[r]], [S1g[r], S2g[r]])
            St[r] = pool_bp((om, 1.0 - om), a, b, [F1t[r], F2t[r]], [S1t[r], S2t[r]])
    else:
        raise DomainError(f"cannot score method {name!r}")
    St = np.asarray(St).reshape(m)
    return Sg, St, St


def score_block(names, params, fits, block, days):
    """Per-year IBS and PIT values for each method.

    ``params[name]`` is a list of per-year ComboParams (None entries mark
    years where estimation failed; those years are skipped for that method).
    """
    Y, W = brier_targets(block.truth_t, block.truth_e, days)
    cache = {}
    out = {}
    for name in names:
        col = registry.METHOD_NAMES.index(name)
        plist = params.get(name)
        keep = np.ones(len(block), dtype=bool)
        if plist is not None:
            keep = np.array([p is not None for p in plist])
        if not keep.any():
            out[name] = (np.zeros(0), np.zeros(0), int(len(block)))
            continue
        if keep.all():
            sub_block, sub_fits, sub_p, sub_cache = block, fits, plist, cache
        else:
            sub_block, sub_fits = block.take(keep), fits.take(keep)
            sub_p = [p for p in plist if p is not None]
            sub_cache = {}
        Sg, St, Sl = method_survival(name, sub_p, sub_fits, sub_block, days, sub_cache)
        ibs_vals = np.sum(W[keep] * (Y[keep] - Sg) ** 2, axis=1)
        u = sub_block.U[:, col]
        Fr, Fl = 1.0 - St, 1.0 - Sl
        pit_vals = np.where(sub_block.truth_e, randomized_pit(Fl, Fr, u), Fr + u * (1.0 - Fr))
        out[name] = (ibs_vals, pit_vals, int((~keep).sum()))
    return out


# ---------------------------------------------------------------------------
# protocols
# ---------------------------------------------------------------------------

@dataclass
class ScenarioResult:
    config: ScenarioConfig
    seed: int
    reports: dict
    params: dict
    n_degenerate: int
    logs: dict

    def report_rows(self):
        from .evaluate import report_rows
        rows = report_rows("scenario", self.config.id, self.reports)
        for r in rows:
            log = self.logs.get(r["method"])
            r["n_nonconverged"] = 0 if log is None else log.nonconverged
        return rows


def _check_methods(methods):
    names = list(registry.METHOD_NAMES) if methods is None else list(methods)
    for n in names:
        registry.get(n)
    # registry order keeps output deterministic
    return [n for n in registry.METHOD_NAMES if n in names]


def _needs_training(names):
    return any(registry.get(n).estimator is not None for n in names)


def _finish(cfg, seed, names, acc, n_degenerate, params, logs, days):
    reports = {}
    for name in names:
        ibs_l, pit_l, excl = acc[name]
        ibs_v = np.concatenate(ibs_l) if ibs_l else np.zeros(0)
        pit_v = np.concatenate(pit_l) if pit_l else np.zeros(0)
        reports[name] = score_report(ibs_v, pit_v, days.size, n_excluded=excl + n_degenerate)
    return ScenarioResult(cfg, seed, reports, params, n_degenerate, logs)


def _fixed_params(names, estimated, m):
    params = {}
    for name in names:
        spec = registry.get(name)
        if name == "lp0":
            params[name] = [spec.template] * m
        elif spec.estimator is not None:
            params[name] = [estimated.get(name)] * m
    return params


def run_scenario_large(cfg, seed=1, methods=None, chunk=CHUNK_YEARS):
    """Single split: estimate on ``n_train`` years, evaluate on ``n_test`` fresh years.

    Years whose source fits are degenerate (fewer than two distinct events)
    are left out of training and of evaluation, and counted.
    """
    names = _check_methods(methods)
    days = day_grid(cfg.t_max)
    logs = {n: EstimationLog() for n in names}
    estimated = {}
    n_deg = 0
    if _needs_training(names):
        train = simulate_block(cfg, seed, ROLE_TRAIN, np.arange(cfg.n_train))
        tf = fit_block(train)
        train, tf = train.take(tf.ok), tf.take(tf.ok)
        estimated = estimate_methods(names, tf, train, days, logs)
    acc = {n: ([], [], 0) for n in names}
    for start in range(0, cfg.n_test, chunk):
        idx = np.arange(start, min(start + chunk, cfg.n_test))
        block = simulate_block(cfg, seed, ROLE_TEST, idx)
        fits = fit_block(block, merge="merge" in names)
        n_deg += int((~fits.ok).sum())
        block, fits = block.take(fits.ok), fits.take(fits.ok)
        res = score_block(names, _fixed_params(names, estimated, len(block)), fits, block, days)
        for n in names:
            iv, pv, ex = res[n]
            acc[n][0].append(iv)
            acc[n][1].append(pv)
            acc[n] = (acc[n][0], acc[n][1], acc[n][2] + ex)
    params = {n: estimated.get(n) for n in names}
    return _finish(cfg, seed, names, acc, n_deg, params, logs, days)


def run_scenario_small(cfg, seed=1, methods=None, chunk_reps=500):
    """Repeated splits: per replication, estimate on ``n_train`` years and score one test year.

    A replication whose test year has a degenerate source fit is excluded
    and counted; degenerate training years are dropped from that
    replication's training set.
    """
    names = _check_methods(methods)
    days = day_grid(cfg.t_max)
    logs = {n: EstimationLog() for n in names}
    train_needed = _needs_training(names)
    per = cfg.n_train + 1
    acc = {n: ([], [], 0) for n in names}
    all_params = {n: [] for n in names if registry.get(n).estimator is not None}
    n_deg = 0
    for r0 in range(0, cfg.n_replications, chunk_reps):
        reps = np.arange(r0, min(r0 + chunk_reps, cfg.n_replications))
        test = simulate_block(cfg, seed, ROLE_REPLICATION, reps * per + cfg.n_train)
        tfits = fit_block(test, merge="merge" in names)
        params = {n: [] for n in names if registry.get(n).is_combination and n != "merge"}
        if train_needed:
            tidx = (reps[:, None] * per + np.arange(cfg.n_train)[None, :]).ravel()
            train = simulate_block(cfg, seed, ROLE_REPLICATION, tidx)
            trfits = fit_block(train)
        for j, rep in enumerate(reps):
            est = {}
            if train_needed and tfits.ok[j]:
                sl = np.arange(j * cfg.n_train, (j + 1) * cfg.n_train)
                sl = sl[trfits.ok[sl]]
                est = estimate_methods(names, trfits.take(sl), train.take(sl), days, logs)
            for n in params:
                spec = registry.get(n)
                params[n].append(spec.template if n == "lp0" else est.get(n))
        for n in all_params:
            all_params[n].extend(p for p, ok in zip(params[n], tfits.ok) if ok)
        keep = tfits.ok
        n_deg += int((~keep).sum())
        test, tfits = test.take(keep), tfits.take(keep)
        params = {n: [p for p, ok in zip(v, keep) if ok] for n, v in params.items()}
        res = score_block(names, params, tfits, test, days)
        for n in names:
            iv, pv, ex = res[n]
            acc[n][0].append(iv)
            acc[n][1].append(pv)
            acc[n] = (acc[n][0], acc[n][1], acc[n][2] + ex)
    return _finish(cfg, seed, names, acc, n_deg, all_params, logs, days)


def run_scenario(cfg, seed=1, methods=None):
    """Dispatch on the protocol: one split when ``n_replications == 1``."""
    if cfg.large:
        return run_scenario_large(cfg, seed, methods)
    return run_scenario_small(cfg, seed, methods)


def censoring_fractions(cfg, seed, n_years=2000):
    """Fraction of censored members per source over simulated years."""
    b = simulate_block(cfg, seed, ROLE_TEST, np.arange(n_years))
    return float(1.0 - b.E1.mean()), float(1.0 - b.E2.mean())
