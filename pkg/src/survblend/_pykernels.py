"""Pure numpy implementations of the numerical kernels.

This module is the reference for ``_ckernels`` (the compiled core) and is used
whenever the extension is unavailable or ``SURVBLEND_BACKEND=python`` is set.
Both modules expose the same functions with the same signatures.
"""
import math

import numpy as np

SQRT1_2 = math.sqrt(0.5)
SQRT_2PI = math.sqrt(2.0 * math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
GP_EPS = 1e-12

BETACF_MAXIT = 5000
BETACF_EPS = 1e-16
FPMIN = 1e-300

# Nelder-Mead coefficients: reflection, expansion, contraction, shrink.
NM_RHO, NM_CHI, NM_PSI, NM_SIGMA = 1.0, 2.0, 0.5, 0.5

BACKEND = "python"

_erfc = np.frompyfunc(math.erfc, 1, 1)
_lgamma = math.lgamma


def _as_float(x):
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

def ndtr(x):
    x = _as_float(x)
    # frompyfunc unwraps 0-d results; keep the array shape of the input
    return np.asarray(0.5 * _erfc(-x * SQRT1_2), dtype=np.float64)


def log_ndtr(x):
    x = _as_float(x)
    out = np.empty_like(x)
    pos = x > 0
    mid = (x <= 0) & (x > -30.0)
    low = x <= -30.0
    out[pos] = np.log1p(-ndtr(-x[pos]))
    out[mid] = np.log(ndtr(x[mid]))
    if low.any():
        xl = x[low]
        r = 1.0 / (xl * xl)
        series = 1.0 + r * (-1.0 + r * (3.0 + r * (-15.0 + r * (105.0 - 945.0 * r))))
        out[low] = -0.5 * xl * xl - np.log(-xl) - LOG_SQRT_2PI + np.log(series)
    out[np.isnan(x)] = np.nan
    return out


def _ndtri_lower(q):
    # q in (0, 0.5); rational start (error < 4.5e-4) then three Halley steps
    t = np.sqrt(-2.0 * np.log(q))
    num = 2.515517 + t * (0.802853 + t * 0.010328)
    den = 1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308))
    x = -(t - num / den)
    for _ in range(3):
        e = ndtr(x) - q
        phi = np.exp(-0.5 * x * x) / SQRT_2PI
        ok = phi > 0.0
        u = np.where(ok, e / np.where(ok, phi, 1.0), 0.0)
        x = x - u / (1.0 + 0.5 * x * u)
    return x


def ndtri(p):
    p = _as_float(p)
    out = np.full(p.shape, np.nan)
    out[p == 0.0] = -np.inf
    out[p == 1.0] = np.inf
    out[p == 0.5] = 0.0
    lo = (p > 0.0) & (p < 0.5)
    hi = (p > 0.5) & (p < 1.0)
    if lo.any():
        out[lo] = _ndtri_lower(p[lo])
    if hi.any():
        out[hi] = -_ndtri_lower(1.0 - p[hi])
    return out


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta (modified Lentz), vectorised over x."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < FPMIN, FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, BETACF_MAXIT + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        xa, ca, da, ha = x[idx], c[idx], d[idx], h[idx]
        m2 = 2 * m
        aa = m * (b - m) * xa / ((qam + m2) * (a + m2))
        da = 1.0 + aa * da
        da = np.where(np.abs(da) < FPMIN, FPMIN, da)
        ca = 1.0 + aa / ca
        ca = np.where(np.abs(ca) < FPMIN, FPMIN, ca)
        da = 1.0 / da
        ha = ha * (da * ca)
        aa = -(a + m) * (qab + m) * xa / ((a + m2) * (qap + m2))
        da = 1.0 + aa * da
        da = np.where(np.abs(da) < FPMIN, FPMIN, da)
        ca = 1.0 + aa / ca
        ca = np.where(np.abs(ca) < FPMIN, FPMIN, ca)
        da = 1.0 / da
        de = da * ca
        ha = ha * de
        c[idx], d[idx], h[idx] = ca, da, ha
        active[idx[np.abs(de - 1.0) < BETACF_EPS]] = False
    return h


def _betainc_pair(a, b, x, y):
    x = _as_float(x)
    y = _as_float(y)
    x, y = np.broadcast_arrays(x, y)
    shape = x.shape
    x = x.ravel()
    y = y.ravel()
    inc = np.empty(x.shape)
    comp = np.empty(x.shape)
    zero = x <= 0.0
    one = (~zero) & (y <= 0.0)
    inc[zero], comp[zero] = 0.0, 1.0
    inc[one], comp[one] = 1.0, 0.0
    inner = ~(zero | one)
    if inner.any():
        xi, yi = x[inner], y[inner]
        lbeta = _lgamma(a + b) - _lgamma(a) - _lgamma(b)
        bt = np.exp(lbeta + a * np.log(xi) + b * np.log(yi))
        front = xi < (a + 1.0) / (a + b + 2.0)
        ii = np.empty(xi.shape)
        cc = np.empty(xi.shape)
        if front.any():
            ii[front] = bt[front] * _betacf(a, b, xi[front]) / a
            cc[front] = 1.0 - ii[front]
        back = ~front
        if back.any():
            cc[back] = bt[back] * _betacf(b, a, yi[back]) / b
            ii[back] = 1.0 - cc[back]
        inc[inner], comp[inner] = ii, cc
    return inc.reshape(shape), comp.reshape(shape)


def betainc(a, b, x, y):
    """Regularised incomplete beta I_x(a, b); ``y`` must equal ``1 - x``."""
    return _betainc_pair(float(a), float(b), x, y)[0]


def betaincc(a, b, x, y):
    """Complement ``1 - I_x(a, b)`` computed without cancellation."""
    return _betainc_pair(float(a), float(b), x, y)[1]


def beta_logpdf(a, b, x, y):
    x = _as_float(x)
    y = _as_float(y)
    lbeta = _lgamma(a + b) - _lgamma(a) - _lgamma(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lbeta + (0.0 if a == 1.0 else (a - 1.0) * np.log(x)) \
            + (0.0 if b == 1.0 else (b - 1.0) * np.log(y))
    out = np.where((x < 0.0) | (y < 0.0), -np.inf, out)
    return out


def stdtr(df, x):
    """Student-t CDF with ``df`` degrees of freedom."""
    df = float(df)
    x = _as_float(x)
    x2 = x * x
    t = df / (df + x2)
    with np.errstate(invalid="ignore"):  # inf/inf, overwritten below
        tc = x2 / (df + x2)
    lower = 0.5 * betainc(0.5 * df, 0.5, t, tc)
    out = np.where(x < 0.0, lower, 1.0 - lower)
    out = np.where(x == 0.0, 0.5, out)
    out = np.where(np.isposinf(x), 1.0, np.where(np.isneginf(x), 0.0, out))
    return out


def t_logpdf(df, x):
    df = float(df)
    x = _as_float(x)
    const = _lgamma(0.5 * (df + 1.0)) - _lgamma(0.5 * df) - 0.5 * math.log(df * math.pi)
    return const - 0.5 * (df + 1.0) * np.log1p(x * x / df)


# ---------------------------------------------------------------------------
# counting kernels
# ---------------------------------------------------------------------------

def _sorted(times, events):
    t = _as_float(times).ravel()
    e = np.asarray(events, dtype=bool).ravel()
    # events precede censorings at tied times
    order = np.lexsort((~e, t))
    return t[order], e[order]


def km_steps(times, events):
    """Kaplan-Meier jump times and survival values after each jump."""
    t, e = _sorted(times, events)
    n = t.size
    jt, sv = [], []
    s = 1.0
    i = 0
    at_risk = n
    while i < n:
        tt = t[i]
        d = 0
        c = 0
        while i < n and t[i] == tt:
            if e[i]:
                d += 1
            else:
                c += 1
            i += 1
        if d > 0:
            s *= 1.0 - d / at_risk
            jt.append(tt)
            sv.append(s)
        at_risk -= d + c
    return np.array(jt, dtype=np.float64), np.array(sv, dtype=np.float64)


def hb_counts(t1, e1, t2, e2):
    """Distinct event times of two ensembles with per-source events and risk sets."""
    a_t, a_e = _sorted(t1, e1)
    b_t, b_e = _sorted(t2, e2)
    na, nb = a_t.size, b_t.size
    i = j = 0
    out_t, out = [], []
    while i < na or j < nb:
        ta = a_t[i] if i < na else math.inf
        tb = b_t[j] if j < nb else math.inf
        tt = ta if ta < tb else tb
        r1, r2 = na - i, nb - j
        d1 = c1 = d2 = c2 = 0
        while i < na and a_t[i] == tt:
            if a_e[i]:
                d1 += 1
            else:
                c1 += 1
            i += 1
        while j < nb and b_t[j] == tt:
            if b_e[j]:
                d2 += 1
            else:
                c2 += 1
            j += 1
        if d1 + d2 > 0:
            out_t.append(tt)
            out.append((d1, r1, d2, r2))
    counts = np.array(out, dtype=np.float64).reshape(-1, 4)
    return (np.array(out_t, dtype=np.float64), counts[:, 0].copy(), counts[:, 1].copy(),
            counts[:, 2].copy(), counts[:, 3].copy())


# ---------------------------------------------------------------------------
# Nelder-Mead
# ---------------------------------------------------------------------------

def _clean(v):
    v = float(v)
    return math.inf if v != v else v


def _order(sim, fs):
    # stable insertion sort on objective values
    n = len(fs)
    for k in range(1, n):
        fk, xk = fs[k], sim[k]
        j = k - 1
        while j >= 0 and fs[j] > fk:
            fs[j + 1], sim[j + 1] = fs[j], sim[j]
            j -= 1
        fs[j + 1], sim[j + 1] = fk, xk


def nelder_mead(func, x0, step, xtol, ftol, maxiter):
    """Deterministic Nelder-Mead simplex search.

    Returns ``(x, fx, nit, nfev, converged)``.
    """
    x0 = [float(v) for v in x0]
    n = len(x0)
    sim = [list(x0)]
    for j in range(n):
        v = list(x0)
        v[j] = v[j] + float(step[j])
        sim.append(v)
    nfev = 0

    def f(v):
        nonlocal nfev
        nfev += 1
        return _clean(func(np.array(v)))

    fs = [f(v) for v in sim]
    _order(sim, fs)
    nit = 0
    converged = False
    while True:
        xspread = 0.0
        fspread = 0.0
        for j in range(1, n + 1):
            for i in range(n):
                dx = abs(sim[j][i] - sim[0][i])
                if dx > xspread:
                    xspread = dx
            df = abs(fs[j] - fs[0])
            if not df <= fspread:
                fspread = df
        if xspread <= xtol and fspread <= ftol:
            converged = True
            break
        if nit >= maxiter:
            break
        xbar = [0.0] * n
        for j in range(n):
            for i in range(n):
                xbar[i] += sim[j][i]
        xbar = [v / n for v in xbar]
        worst = sim[n]
        xr = [(1.0 + NM_RHO) * xbar[i] - NM_RHO * worst[i] for i in range(n)]
        fr = f(xr)
        shrink = False
        if fr < fs[0]:
            xe = [(1.0 + NM_RHO * NM_CHI) * xbar[i] - NM_RHO * NM_CHI * worst[i] for i in range(n)]
            fe = f(xe)
            if fe < fr:
                sim[n], fs[n] = xe, fe
            else:
                sim[n], fs[n] = xr, fr
        elif fr < fs[n - 1]:
            sim[n], fs[n] = xr, fr
        elif fr < fs[n]:
            xc = [(1.0 + NM_PSI * NM_RHO) * xbar[i] - NM_PSI * NM_RHO * worst[i] for i in range(n)]
            fc = f(xc)
            if fc <= fr:
                sim[n], fs[n] = xc, fc
            else:
                shrink = True
        else:
            xcc = [(1.0 - NM_PSI) * xbar[i] + NM_PSI * worst[i] for i in range(n)]
            fcc = f(xcc)
            if fcc < fs[n]:
                sim[n], fs[n] = xcc, fcc
            else:
                shrink = True
        if shrink:
            best = sim[0]
            for j in range(1, n + 1):
                sim[j] = [best[i] + NM_SIGMA * (sim[j][i] - best[i]) for i in range(n)]
                fs[j] = f(sim[j])
        _order(sim, fs)
        nit += 1
    return np.array(sim[0]), fs[0], nit, nfev, converged


# ---------------------------------------------------------------------------
# censored log-normal fits
# ---------------------------------------------------------------------------

class _LogNormalProblem:
    def __init__(self, times, events, tau_min):
        t = _as_float(times)
        e = np.asarray(events, dtype=bool)
        y = np.log(t[e])
        self.n_events = y.size
        self.ybar = float(np.mean(y)) if y.size else 0.0
        self.syy = float(np.sum((y - self.ybar) ** 2)) if y.size else 0.0
        self.sumy = float(np.sum(y))
        cl, cn = np.unique(np.log(t[~e]), return_counts=True)
        self.cens_logt = cl
        self.cens_n = cn.astype(np.float64)
        self.tau_min = tau_min
        self.degenerate = y.size < 2 or (y.size >= 2 and np.max(y) == np.min(y))
        ally = np.log(t)
        self.start_xi = float(np.mean(ally))
        self.start_tau = max(float(np.sqrt(np.mean((ally - self.start_xi) ** 2))), tau_min)

    def negloglik(self, xi, tau):
        ne = self.n_events
        val = ne * math.log(tau) + (self.syy + ne * (self.ybar - xi) ** 2) / (2.0 * tau * tau)
        val += ne * LOG_SQRT_2PI + self.sumy
        if self.cens_logt.size:
            z = (self.cens_logt - xi) / tau
            val -= float(np.sum(self.cens_n * log_ndtr(-z)))
        return val

    def __call__(self, theta):
        tau = max(math.exp(min(theta[1], 700.0)), self.tau_min)
        return self.negloglik(theta[0], tau)


def lognormal_negloglik(times, events, xi, tau):
    return _LogNormalProblem(times, events, 0.0).negloglik(float(xi), float(tau))


def fit_lognormal_batch(times, events, tau_min, tol, maxiter):
    """Censored log-normal ML fit of every row of ``times``/``events``.

    Returns ``(xi, tau, status)``; status 0 ok, 1 degenerate, 2 not converged.
    """
    times = np.atleast_2d(_as_float(times))
    events = np.atleast_2d(np.asarray(events, dtype=bool))
    m = times.shape[0]
    xi = np.full(m, np.nan)
    tau = np.full(m, np.nan)
    status = np.zeros(m, dtype=np.int64)
    for r in range(m):
        prob = _LogNormalProblem(times[r], events[r], tau_min)
        if prob.degenerate:
            status[r] = 1
            continue
        x0 = [prob.start_xi, math.log(prob.start_tau)]
        step = [0.5 * prob.start_tau, 0.25]
        x, _, _, _, ok = nelder_mead(prob, x0, step, tol, tol, maxiter)
        xi[r] = x[0]
        tau[r] = max(math.exp(min(x[1], 700.0)), tau_min)
        status[r] = 0 if ok else 2
    return xi, tau, status


# ---------------------------------------------------------------------------
# combination objectives
# ---------------------------------------------------------------------------

FAMILY = {"lp_ml": "lp", "bp_ml": "bp", "gp_ml": "gp", "gpt_ml": "gp",
          "lp_ibs": "lp", "bp_ibs": "bp", "gp_ibs": "gp", "hb_ibs": "lp"}


def _expit(v):
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    ev = math.exp(v)
    return ev / (1.0 + ev)


def resolve_params(kind, theta, src, fixval):
    """Map a free parameter vector to the natural (omega, p2, p3) triple."""
    family = FAMILY[kind]
    full = [0.0, 0.0, 0.0]
    for j in range(3):
        s = src[j]
        if s >= 0:
            v = float(theta[s])
            if j == 0:
                v = _expit(v)
            elif j == 2 or family == "bp":
                v = math.exp(min(v, 700.0))
            full[j] = v
        elif s == -1:
            full[j] = float(fixval[j])
        else:
            full[j] = full[1]
    return full


def _clamped_quantile(F):
    return ndtri(np.clip(F, GP_EPS, 1.0 - GP_EPS))


class _ComboObjective:
    def __init__(self, kind, data):
        self.kind = kind
        self.d = {k: (np.asarray(v) if not np.isscalar(v) else v) for k, v in data.items()}
        d = self.d
        if kind in ("gp_ml", "gpt_ml"):
            q1 = _clamped_quantile(d["F1"])
            q2 = _clamped_quantile(d["F2"])
            self.q1, self.q2 = q1, q2
            self.r1 = d["f1"] * SQRT_2PI * np.exp(0.5 * q1 * q1)
            self.r2 = d["f2"] * SQRT_2PI * np.exp(0.5 * q2 * q2)
        if kind == "gp_ibs":
            self.q1 = _clamped_quantile(d["F1"])
            self.q2 = _clamped_quantile(d["F2"])
        if kind in ("lp_ml", "bp_ml", "gp_ml", "gpt_ml"):
            self.cens = np.asarray(d["cens"], dtype=bool)

    def __call__(self, w, p2, p3):
        k = self.kind
        d = self.d
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if k == "lp_ml":
                dens = w * d["f1"] + (1.0 - w) * d["f2"]
                surv = w * d["S1"] + (1.0 - w) * d["S2"]
                ll = np.where(self.cens, np.log(surv), np.log(dens))
                return _clean(-np.sum(ll))
            if k == "bp_ml":
                u = w * d["F1"] + (1.0 - w) * d["F2"]
                v = w * d["S1"] + (1.0 - w) * d["S2"]
                dens = w * d["f1"] + (1.0 - w) * d["f2"]
                ll_e = beta_logpdf(p2, p3, u, v) + np.log(dens)
                ll_c = np.log(betaincc(p2, p3, u, v))
                return _clean(-np.sum(np.where(self.cens, ll_c, ll_e)))
            if k in ("gp_ml", "gpt_ml"):
                z = (w * self.q1 + (1.0 - w) * self.q2 - p2) / p3
                jac = np.log(w * self.r1 + (1.0 - w) * self.r2) - math.log(p3)
                if k == "gp_ml":
                    ll_e = -0.5 * z * z - LOG_SQRT_2PI + jac
                    ll_c = log_ndtr(-z)
                else:
                    df = float(d["df"])
                    ll_e = t_logpdf(df, z) + jac
                    ll_c = np.log(stdtr(df, -z))
                return _clean(-np.sum(np.where(self.cens, ll_c, ll_e)))
            if k == "lp_ibs":
                s = w * d["S1"] + (1.0 - w) * d["S2"]
            elif k == "bp_ibs":
                u = w * d["F1"] + (1.0 - w) * d["F2"]
                v = w * d["S1"] + (1.0 - w) * d["S2"]
                s = betaincc(p2, p3, u, v)
            elif k == "gp_ibs":
                z = (w * self.q1 + (1.0 - w) * self.q2 - p2) / p3
                s = ndtr(-z)
            elif k == "hb_ibs":
                return _clean(self._hb_ibs(w))
            else:
                raise ValueError(f"unknown objective kind {k!r}")
            r = d["Y"] - s
            per_pair = np.sum(d["W"] * r * r, axis=1)
            return _clean(np.mean(per_pair))

    def _hb_ibs(self, w):
        d = self.d
        off = d["offsets"]
        Y, W = d["Y"], d["W"]
        n, T = Y.shape
        total = 0.0
        for i in range(n):
            a, b = off[i], off[i + 1]
            num = w * d["d1"][a:b] + (1.0 - w) * d["d2"][a:b]
            den = w * d["n1"][a:b] + (1.0 - w) * d["n2"][a:b]
            if b > a:
                lam = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)
                surv = np.cumprod(1.0 - lam)
                # number of jumps at or before each grid index
                njump = np.searchsorted(d["kidx"][a:b], np.arange(T), side="right")
                s = np.where(njump > 0, surv[np.maximum(njump - 1, 0)], 1.0)
            else:
                s = np.ones(T)
            r = Y[i] - s
            total += float(np.sum(W[i] * r * r))
        return total / n


def combo_objective(kind, data, params):
    """Objective (negative log-likelihood or mean IBS) at natural parameters."""
    w, p2, p3 = (float(v) for v in params)
    return _ComboObjective(kind, data)(w, p2, p3)


def optimize_combo(kind, data, theta0, src, fixval, step, xtol, ftol, maxiter):
    obj = _ComboObjective(kind, data)
    src = [int(s) for s in src]

    def f(theta):
        w, p2, p3 = resolve_params(kind, theta, src, fixval)
        return obj(w, p2, p3)

    return nelder_mead(f, theta0, step, xtol, ftol, maxiter)
