# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels.

Function-for-function twin of :mod:`survblend._pykernels`; see that module for
the reference semantics.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, NAN, ceil, erfc, exp, fabs, isnan, lgamma, log, log1p, sqrt

cnp.import_array()

cdef enum:
    BETACF_MAXIT = 5000

cdef double SQRT1_2 = 0.70710678118654752440
cdef double SQRT_2PI = 2.50662827463100050242
cdef double LOG_SQRT_2PI = 0.91893853320467274178
cdef double PI = 3.14159265358979323846
cdef double GP_EPS = 1e-12
cdef double BETACF_EPS = 1e-16
cdef double FPMIN = 1e-300
cdef double NM_RHO = 1.0, NM_CHI = 2.0, NM_PSI = 0.5, NM_SIGMA = 0.5

BACKEND = "compiled"


# ---------------------------------------------------------------------------
# scalar special functions
# ---------------------------------------------------------------------------

cdef inline double c_ndtr(double x) nogil:
    return 0.5 * erfc(-x * SQRT1_2)


cdef double c_log_ndtr(double x) nogil:
    cdef double r, series
    if isnan(x):
        return NAN
    if x > 0.0:
        return log1p(-c_ndtr(-x))
    if x > -30.0:
        return log(c_ndtr(x))
    r = 1.0 / (x * x)
    series = 1.0 + r * (-1.0 + r * (3.0 + r * (-15.0 + r * (105.0 - 945.0 * r))))
    return -0.5 * x * x - log(-x) - LOG_SQRT_2PI + log(series)


cdef double c_ndtri_lower(double q) nogil:
    cdef double t, num, den, x, e, phi, u
    cdef int k
    t = sqrt(-2.0 * log(q))
    num = 2.515517 + t * (0.802853 + t * 0.010328)
    den = 1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308))
    x = -(t - num / den)
    for k in range(3):
        e = c_ndtr(x) - q
        phi = exp(-0.5 * x * x) / SQRT_2PI
        if phi > 0.0:
            u = e / phi
        else:
            u = 0.0
        x = x - u / (1.0 + 0.5 * x * u)
    return x


cdef double c_ndtri(double p) nogil:
    if p == 0.5:
        return 0.0
    if p > 0.0 and p < 0.5:
        return c_ndtri_lower(p)
    if p > 0.5 and p < 1.0:
        return -c_ndtri_lower(1.0 - p)
    if p == 0.0:
        return -INFINITY
    if p == 1.0:
        return INFINITY
    return NAN


cdef double c_betacf(double a, double b, double x) nogil:
    cdef double qab = a + b, qap = a + 1.0, qam = a - 1.0
    cdef double c = 1.0, d, h, aa, de
    cdef int m, m2
    d = 1.0 - qab * x / qap
    if fabs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, BETACF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if fabs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h = h * (d * c)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if fabs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        de = d * c
        h = h * de
        if fabs(de - 1.0) < BETACF_EPS:
            break
    return h


cdef inline double c_lbeta(double a, double b) nogil:
    return lgamma(a + b) - lgamma(a) - lgamma(b)


cdef void c_betainc_pair(double a, double b, double lbeta, double x, double y,
                         double* inc, double* comp) nogil:
    cdef double bt
    if x <= 0.0:
        inc[0] = 0.0
        comp[0] = 1.0
        return
    if y <= 0.0:
        inc[0] = 1.0
        comp[0] = 0.0
        return
    bt = exp(lbeta + a * log(x) + b * log(y))
    if x < (a + 1.0) / (a + b + 2.0):
        inc[0] = bt * c_betacf(a, b, x) / a
        comp[0] = 1.0 - inc[0]
    else:
        comp[0] = bt * c_betacf(b, a, y) / b
        inc[0] = 1.0 - comp[0]


cdef double c_beta_logpdf(double a, double b, double lbeta, double x, double y) nogil:
    if x < 0.0 or y < 0.0:
        return -INFINITY
    cdef double out = lbeta
    # a unit exponent contributes nothing, also at the boundary
    if a != 1.0:
        out += (a - 1.0) * log(x)
    if b != 1.0:
        out += (b - 1.0) * log(y)
    return out


cdef double c_stdtr(double df, double lbeta_t, double x) nogil:
    # lbeta_t is lbeta(df/2, 1/2)
    cdef double x2, t, tc, inc, comp, lower
    if x == 0.0:
        return 0.5
    if x == INFINITY:
        return 1.0
    if x == -INFINITY:
        return 0.0
    x2 = x * x
    t = df / (df + x2)
    tc = x2 / (df + x2)
    c_betainc_pair(0.5 * df, 0.5, lbeta_t, t, tc, &inc, &comp)
    lower = 0.5 * inc
    if x < 0.0:
        return lower
    return 1.0 - lower


cdef inline double c_t_logpdf(double df, double const, double x) nogil:
    return const - 0.5 * (df + 1.0) * log1p(x * x / df)


cdef inline double t_logpdf_const(double df):
    return lgamma(0.5 * (df + 1.0)) - lgamma(0.5 * df) - 0.5 * log(df * PI)


# ---------------------------------------------------------------------------
# vectorised wrappers
# ---------------------------------------------------------------------------

def _as_float(x):
    # keeps 0-d inputs 0-d, unlike ascontiguousarray
    return np.array(x, dtype=np.float64, order="C")


def ndtr(x):
    cdef cnp.ndarray arr = _as_float(x)
    cdef cnp.ndarray out = np.empty_like(arr)
    cdef double[::1] xi = arr.reshape(-1)
    cdef double[::1] oi = out.reshape(-1)
    cdef Py_ssize_t i
    with nogil:
        for i in range(xi.shape[0]):
            oi[i] = c_ndtr(xi[i])
    return out


def log_ndtr(x):
    cdef cnp.ndarray arr = _as_float(x)
    cdef cnp.ndarray out = np.empty_like(arr)
    cdef double[::1] xi = arr.reshape(-1)
    cdef double[::1] oi = out.reshape(-1)
    cdef Py_ssize_t i
    with nogil:
        for i in range(xi.shape[0]):
            oi[i] = c_log_ndtr(xi[i])
    return out


def ndtri(p):
    cdef cnp.ndarray arr = _as_float(p)
    cdef cnp.ndarray out = np.empty_like(arr)
    cdef double[::1] xi = arr.reshape(-1)
    cdef double[::1] oi = out.reshape(-1)
    cdef Py_ssize_t i
    with nogil:
        for i in range(xi.shape[0]):
            oi[i] = c_ndtri(xi[i])
    return out


def _betainc_both(double a, double b, x, y):
    xa, ya = np.broadcast_arrays(_as_float(x), _as_float(y))
    shape = xa.shape
    cdef const double[::1] xv = np.ascontiguousarray(xa).reshape(-1)
    cdef const double[::1] yv = np.ascontiguousarray(ya).reshape(-1)
    inc = np.empty(xv.shape[0])
    comp = np.empty(xv.shape[0])
    cdef double[::1] iv = inc
    cdef double[::1] cv = comp
    cdef double lbeta = c_lbeta(a, b)
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            c_betainc_pair(a, b, lbeta, xv[i], yv[i], &iv[i], &cv[i])
    return inc.reshape(shape), comp.reshape(shape)


def betainc(a, b, x, y):
    """Regularised incomplete beta I_x(a, b); ``y`` must equal ``1 - x``."""
    return _betainc_both(float(a), float(b), x, y)[0]


def betaincc(a, b, x, y):
    """Complement ``1 - I_x(a, b)`` computed without cancellation."""
    return _betainc_both(float(a), float(b), x, y)[1]


def beta_logpdf(a, b, x, y):
    xa, ya = np.broadcast_arrays(_as_float(x), _as_float(y))
    shape = xa.shape
    cdef const double[::1] xv = np.ascontiguousarray(xa).reshape(-1)
    cdef const double[::1] yv = np.ascontiguousarray(ya).reshape(-1)
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef double fa = a, fb = b
    cdef double lbeta = c_lbeta(fa, fb)
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = c_beta_logpdf(fa, fb, lbeta, xv[i], yv[i])
    return out.reshape(shape)


def stdtr(df, x):
    """Student-t CDF with ``df`` degrees of freedom."""
    cdef double fdf = df
    cdef cnp.ndarray arr = _as_float(x)
    cdef cnp.ndarray out = np.empty_like(arr)
    cdef double[::1] xi = arr.reshape(-1)
    cdef double[::1] oi = out.reshape(-1)
    cdef double lb = c_lbeta(0.5 * fdf, 0.5)
    cdef Py_ssize_t i
    with nogil:
        for i in range(xi.shape[0]):
            oi[i] = c_stdtr(fdf, lb, xi[i])
    return out


def t_logpdf(df, x):
    cdef double fdf = df
    cdef cnp.ndarray arr = _as_float(x)
    cdef cnp.ndarray out = np.empty_like(arr)
    cdef double[::1] xi = arr.reshape(-1)
    cdef double[::1] oi = out.reshape(-1)
    cdef double const = t_logpdf_const(fdf)
    cdef Py_ssize_t i
    with nogil:
        for i in range(xi.shape[0]):
            oi[i] = c_t_logpdf(fdf, const, xi[i])
    return out


# ---------------------------------------------------------------------------
# counting kernels
# ---------------------------------------------------------------------------

def _sorted(times, events):
    t = np.ascontiguousarray(times, dtype=np.float64).ravel()
    e = np.ascontiguousarray(events, dtype=bool).ravel()
    order = np.lexsort((~e, t))
    return np.ascontiguousarray(t[order]), np.ascontiguousarray(e[order].view(np.uint8))


def km_steps(times, events):
    """Kaplan-Meier jump times and survival values after each jump."""
    ts, es = _sorted(times, events)
    cdef const double[::1] t = ts
    cdef const unsigned char[::1] e = es
    cdef Py_ssize_t n = t.shape[0], i = 0, k = 0, at_risk = n, d, c
    jt = np.empty(n)
    sv = np.empty(n)
    cdef double[::1] jv = jt
    cdef double[::1] svv = sv
    cdef double s = 1.0, tt
    with nogil:
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
                s *= 1.0 - <double>d / <double>at_risk
                jv[k] = tt
                svv[k] = s
                k += 1
            at_risk -= d + c
    return jt[:k].copy(), sv[:k].copy()


def hb_counts(t1, e1, t2, e2):
    """Distinct event times of two ensembles with per-source events and risk sets."""
    at, ae = _sorted(t1, e1)
    bt, be = _sorted(t2, e2)
    cdef const double[::1] a_t = at
    cdef const double[::1] b_t = bt
    cdef const unsigned char[::1] a_e = ae
    cdef const unsigned char[::1] b_e = be
    cdef Py_ssize_t na = a_t.shape[0], nb = b_t.shape[0], i = 0, j = 0, k = 0
    cdef Py_ssize_t r1, r2, d1, d2
    cdef double ta, tb, tt
    out_t = np.empty(na + nb)
    out = np.empty((na + nb, 4))
    cdef double[::1] ot = out_t
    cdef double[:, ::1] oc = out
    with nogil:
        while i < na or j < nb:
            ta = a_t[i] if i < na else INFINITY
            tb = b_t[j] if j < nb else INFINITY
            tt = ta if ta < tb else tb
            r1 = na - i
            r2 = nb - j
            d1 = 0
            d2 = 0
            while i < na and a_t[i] == tt:
                if a_e[i]:
                    d1 += 1
                i += 1
            while j < nb and b_t[j] == tt:
                if b_e[j]:
                    d2 += 1
                j += 1
            if d1 + d2 > 0:
                ot[k] = tt
                oc[k, 0] = d1
                oc[k, 1] = r1
                oc[k, 2] = d2
                oc[k, 3] = r2
                k += 1
    return (out_t[:k].copy(), out[:k, 0].copy(), out[:k, 1].copy(),
            out[:k, 2].copy(), out[:k, 3].copy())


# ---------------------------------------------------------------------------
# Nelder-Mead over compiled objectives
# ---------------------------------------------------------------------------

cdef class Objective:
    cdef int n

    cdef double value(self, double* x):
        return INFINITY


cdef inline double clean(double v) nogil:
    if isnan(v):
        return INFINITY
    return v


cdef void order_simplex(double* sim, double* fs, int n):
    # stable insertion sort of n+1 vertices by objective
    cdef int k, j, i
    cdef double fk
    cdef double xk[3]
    for k in range(1, n + 1):
        fk = fs[k]
        for i in range(n):
            xk[i] = sim[k * n + i]
        j = k - 1
        while j >= 0 and fs[j] > fk:
            fs[j + 1] = fs[j]
            for i in range(n):
                sim[(j + 1) * n + i] = sim[j * n + i]
            j -= 1
        fs[j + 1] = fk
        for i in range(n):
            sim[(j + 1) * n + i] = xk[i]


cdef int run_nelder_mead(Objective obj, double* x0, double* step, double xtol, double ftol,
                         int maxiter, double* xbest, double* fbest, int* nit_out,
                         int* nfev_out):
    cdef int n = obj.n
    cdef double sim[12]
    cdef double fs[4]
    cdef double xbar[3]
    cdef double xr[3]
    cdef double xe[3]
    cdef double xc[3]
    cdef double fr, fe, fc, dx, df, xspread, fspread
    cdef int i, j, nit = 0, nfev = 0, converged = 0, shrink
    for i in range(n):
        sim[i] = x0[i]
    for j in range(n):
        for i in range(n):
            sim[(j + 1) * n + i] = x0[i]
        sim[(j + 1) * n + j] = x0[j] + step[j]
    for j in range(n + 1):
        fs[j] = clean(obj.value(&sim[j * n]))
        nfev += 1
    order_simplex(sim, fs, n)
    while True:
        xspread = 0.0
        fspread = 0.0
        for j in range(1, n + 1):
            for i in range(n):
                dx = fabs(sim[j * n + i] - sim[i])
                if dx > xspread:
                    xspread = dx
            df = fabs(fs[j] - fs[0])
            if not df <= fspread:
                fspread = df
        if xspread <= xtol and fspread <= ftol:
            converged = 1
            break
        if nit >= maxiter:
            break
        for i in range(n):
            xbar[i] = 0.0
        for j in range(n):
            for i in range(n):
                xbar[i] += sim[j * n + i]
        for i in range(n):
            xbar[i] = xbar[i] / n
        for i in range(n):
            xr[i] = (1.0 + NM_RHO) * xbar[i] - NM_RHO * sim[n * n + i]
        fr = clean(obj.value(xr))
        nfev += 1
        shrink = 0
        if fr < fs[0]:
            for i in range(n):
                xe[i] = (1.0 + NM_RHO * NM_CHI) * xbar[i] - NM_RHO * NM_CHI * sim[n * n + i]
            fe = clean(obj.value(xe))
            nfev += 1
            if fe < fr:
                for i in range(n):
                    sim[n * n + i] = xe[i]
                fs[n] = fe
            else:
                for i in range(n):
                    sim[n * n + i] = xr[i]
                fs[n] = fr
        elif fr < fs[n - 1]:
            for i in range(n):
                sim[n * n + i] = xr[i]
            fs[n] = fr
        elif fr < fs[n]:
            for i in range(n):
                xc[i] = (1.0 + NM_PSI * NM_RHO) * xbar[i] - NM_PSI * NM_RHO * sim[n * n + i]
            fc = clean(obj.value(xc))
            nfev += 1
            if fc <= fr:
                for i in range(n):
                    sim[n * n + i] = xc[i]
                fs[n] = fc
            else:
                shrink = 1
        else:
            for i in range(n):
                xc[i] = (1.0 - NM_PSI) * xbar[i] + NM_PSI * sim[n * n + i]
            fc = clean(obj.value(xc))
            nfev += 1
            if fc < fs[n]:
                for i in range(n):
                    sim[n * n + i] = xc[i]
                fs[n] = fc
            else:
                shrink = 1
        if shrink:
            for j in range(1, n + 1):
                for i in range(n):
                    sim[j * n + i] = sim[i] + NM_SIGMA * (sim[j * n + i] - sim[i])
                fs[j] = clean(obj.value(&sim[j * n]))
                nfev += 1
        order_simplex(sim, fs, n)
        nit += 1
    for i in range(n):
        xbest[i] = sim[i]
    fbest[0] = fs[0]
    nit_out[0] = nit
    nfev_out[0] = nfev
    return converged


cdef class PyObjective(Objective):
    cdef object func

    def __init__(self, func, int n):
        self.func = func
        self.n = n

    cdef double value(self, double* x):
        cdef int i
        arr = np.empty(self.n)
        for i in range(self.n):
            arr[i] = x[i]
        return float(self.func(arr))


def nelder_mead(func, x0, step, double xtol, double ftol, int maxiter):
    """Deterministic Nelder-Mead simplex search.

    Returns ``(x, fx, nit, nfev, converged)``.
    """
    cdef int n = len(x0)
    if n < 1 or n > 3:
        raise ValueError("nelder_mead supports 1 to 3 parameters")
    cdef PyObjective obj = PyObjective(func, n)
    return _run(obj, x0, step, xtol, ftol, maxiter)


cdef tuple _run(Objective obj, x0, step, double xtol, double ftol, int maxiter):
    cdef double cx0[3]
    cdef double cstep[3]
    cdef double xb[3]
    cdef double fb
    cdef int nit, nfev, ok, i
    for i in range(obj.n):
        cx0[i] = x0[i]
        cstep[i] = step[i]
    ok = run_nelder_mead(obj, cx0, cstep, xtol, ftol, maxiter, xb, &fb, &nit, &nfev)
    return np.array([xb[i] for i in range(obj.n)]), fb, nit, nfev, bool(ok)


# ---------------------------------------------------------------------------
# censored log-normal fits
# ---------------------------------------------------------------------------

cdef class LogNormalObjective(Objective):
    cdef double ne, ybar, syy, sumy, tau_min
    cdef double[::1] cl
    cdef double[::1] cn

    def __init__(self, double ne, double ybar, double syy, double sumy, cl, cn, double tau_min):
        self.n = 2
        self.ne = ne
        self.ybar = ybar
        self.syy = syy
        self.sumy = sumy
        self.cl = cl
        self.cn = cn
        self.tau_min = tau_min

    cdef double negloglik(self, double xi, double tau):
        cdef double val, z
        cdef Py_ssize_t k
        val = self.ne * log(tau) + (self.syy + self.ne * (self.ybar - xi) * (self.ybar - xi)) / (2.0 * tau * tau)
        val += self.ne * LOG_SQRT_2PI + self.sumy
        for k in range(self.cl.shape[0]):
            z = (self.cl[k] - xi) / tau
            val -= self.cn[k] * c_log_ndtr(-z)
        return val

    cdef double value(self, double* x):
        cdef double tau = exp(x[1] if x[1] < 700.0 else 700.0)
        if tau < self.tau_min:
            tau = self.tau_min
        return self.negloglik(x[0], tau)


cdef LogNormalObjective _lognormal_problem(const double[::1] t, const unsigned char[::1] e, double tau_min,
                                          double* start_xi, double* start_tau, int* degenerate):
    cdef Py_ssize_t n = t.shape[0], i, ne = 0, nc = 0, k
    cdef double sy = 0.0, ybar = 0.0, syy = 0.0, y, ymin = INFINITY, ymax = -INFINITY
    cdef double sall = 0.0, mall, vall = 0.0
    for i in range(n):
        y = log(t[i])
        sall += y
        if e[i]:
            ne += 1
            sy += y
            if y < ymin:
                ymin = y
            if y > ymax:
                ymax = y
        else:
            nc += 1
    if ne > 0:
        ybar = sy / ne
    for i in range(n):
        if e[i]:
            y = log(t[i])
            syy += (y - ybar) * (y - ybar)
    mall = sall / n
    for i in range(n):
        y = log(t[i])
        vall += (y - mall) * (y - mall)
    start_xi[0] = mall
    start_tau[0] = sqrt(vall / n)
    if start_tau[0] < tau_min:
        start_tau[0] = tau_min
    degenerate[0] = 1 if (ne < 2 or ymax == ymin) else 0
    cens = np.empty(nc)
    cdef double[::1] cv = cens
    k = 0
    for i in range(n):
        if not e[i]:
            cv[k] = log(t[i])
            k += 1
    cl, cn = np.unique(cens, return_counts=True)
    return LogNormalObjective(<double>ne, ybar, syy, sy, np.ascontiguousarray(cl, dtype=np.float64),
                              np.ascontiguousarray(cn, dtype=np.float64), tau_min)


def lognormal_negloglik(times, events, double xi, double tau):
    t = np.ascontiguousarray(times, dtype=np.float64).ravel()
    e = np.ascontiguousarray(events, dtype=bool).ravel().view(np.uint8)
    cdef double sx, st
    cdef int deg
    cdef LogNormalObjective obj = _lognormal_problem(t, e, 0.0, &sx, &st, &deg)
    return obj.negloglik(xi, tau)


def fit_lognormal_batch(times, events, double tau_min, double tol, int maxiter):
    """Censored log-normal ML fit of every row of ``times``/``events``.

    Returns ``(xi, tau, status)``; status 0 ok, 1 degenerate, 2 not converged.
    """
    T = np.ascontiguousarray(np.atleast_2d(times), dtype=np.float64)
    E = np.ascontiguousarray(np.atleast_2d(events), dtype=bool).view(np.uint8)
    cdef Py_ssize_t m = T.shape[0], r
    xi = np.full(m, np.nan)
    tau = np.full(m, np.nan)
    status = np.zeros(m, dtype=np.int64)
    cdef const double[:, ::1] tv = T
    cdef const unsigned char[:, ::1] ev = E
    cdef double[::1] xiv = xi
    cdef double[::1] tauv = tau
    cdef cnp.int64_t[::1] sv = status
    cdef double sx, st, fb
    cdef double x0[2]
    cdef double step[2]
    cdef double xb[3]
    cdef int deg, nit, nfev, ok
    cdef LogNormalObjective obj
    for r in range(m):
        obj = _lognormal_problem(tv[r], ev[r], tau_min, &sx, &st, &deg)
        if deg:
            sv[r] = 1
            continue
        x0[0] = sx
        x0[1] = log(st)
        step[0] = 0.5 * st
        step[1] = 0.25
        ok = run_nelder_mead(obj, x0, step, tol, tol, maxiter, xb, &fb, &nit, &nfev)
        xiv[r] = xb[0]
        tauv[r] = exp(xb[1] if xb[1] < 700.0 else 700.0)
        if tauv[r] < tau_min:
            tauv[r] = tau_min
        sv[r] = 0 if ok else 2
    return xi, tau, status


# ---------------------------------------------------------------------------
# combination objectives
# ---------------------------------------------------------------------------

FAMILY = {"lp_ml": "lp", "bp_ml": "bp", "gp_ml": "gp", "gpt_ml": "gp",
          "lp_ibs": "lp", "bp_ibs": "bp", "gp_ibs": "gp", "hb_ibs": "lp"}


cdef inline double expit(double v) nogil:
    cdef double ev
    if v >= 0:
        return 1.0 / (1.0 + exp(-v))
    ev = exp(v)
    return ev / (1.0 + ev)


def _vec(data, key):
    return np.ascontiguousarray(data[key], dtype=np.float64).reshape(-1)


def _mat(data, key):
    return np.ascontiguousarray(np.atleast_2d(data[key]), dtype=np.float64)


def _clamped_quantile(F):
    return ndtri(np.clip(F, GP_EPS, 1.0 - GP_EPS))


cdef class ComboObjective(Objective):
    cdef int kind  # 0 lp_ml 1 bp_ml 2 gp_ml 3 gpt_ml 4 lp_ibs 5 bp_ibs 6 gp_ibs 7 hb_ibs
    cdef int is_bp, is_gp
    cdef int src[3]
    cdef double fixval[3]
    cdef double df, tconst
    cdef const double[::1] F1, F2, S1, S2, f1, f2, q1, q2, r1, r2, cens
    cdef const double[:, ::1] MF1, MF2, MS1, MS2, MQ1, MQ2, Y, W
    cdef const cnp.int64_t[::1] offsets, kidx
    cdef const double[::1] hd1, hn1, hd2, hn2

    def __init__(self, str kind, dict data, src=(0, -1, -1), fixval=(0.0, 0.0, 0.0)):
        cdef int j, nfree = 0
        kinds = ["lp_ml", "bp_ml", "gp_ml", "gpt_ml", "lp_ibs", "bp_ibs", "gp_ibs", "hb_ibs"]
        if kind not in kinds:
            raise ValueError(f"unknown objective kind {kind!r}")
        self.kind = kinds.index(kind)
        self.is_bp = FAMILY[kind] == "bp"
        self.is_gp = FAMILY[kind] == "gp"
        for j in range(3):
            self.src[j] = src[j]
            self.fixval[j] = fixval[j]
            if src[j] >= 0:
                nfree += 1
        self.n = nfree
        if self.kind <= 3:
            self.F1 = _vec(data, "F1")
            self.F2 = _vec(data, "F2")
            self.S1 = _vec(data, "S1")
            self.S2 = _vec(data, "S2")
            self.f1 = _vec(data, "f1")
            self.f2 = _vec(data, "f2")
            self.cens = np.ascontiguousarray(data["cens"], dtype=np.float64).reshape(-1)
            if self.kind in (2, 3):
                q1 = _clamped_quantile(np.asarray(self.F1))
                q2 = _clamped_quantile(np.asarray(self.F2))
                self.q1 = q1
                self.q2 = q2
                self.r1 = np.asarray(self.f1) * SQRT_2PI * np.exp(0.5 * q1 * q1)
                self.r2 = np.asarray(self.f2) * SQRT_2PI * np.exp(0.5 * q2 * q2)
            if self.kind == 3:
                self.df = float(data["df"])
                self.tconst = t_logpdf_const(self.df)
        elif self.kind <= 6:
            self.Y = _mat(data, "Y")
            self.W = _mat(data, "W")
            self.MS1 = _mat(data, "S1")
            self.MS2 = _mat(data, "S2")
            if self.kind == 5:
                self.MF1 = _mat(data, "F1")
                self.MF2 = _mat(data, "F2")
            if self.kind == 6:
                self.MQ1 = np.ascontiguousarray(_clamped_quantile(_mat(data, "F1")))
                self.MQ2 = np.ascontiguousarray(_clamped_quantile(_mat(data, "F2")))
        else:
            self.Y = _mat(data, "Y")
            self.W = _mat(data, "W")
            self.offsets = np.ascontiguousarray(data["offsets"], dtype=np.int64)
            self.kidx = np.ascontiguousarray(data["kidx"], dtype=np.int64)
            self.hd1 = _vec(data, "d1")
            self.hn1 = _vec(data, "n1")
            self.hd2 = _vec(data, "d2")
            self.hn2 = _vec(data, "n2")

    cdef double value(self, double* x):
        cdef double full[3]
        cdef double v
        cdef int j, s
        for j in range(3):
            s = self.src[j]
            if s >= 0:
                v = x[s]
                if j == 0:
                    v = expit(v)
                elif j == 2 or self.is_bp:
                    v = exp(v if v < 700.0 else 700.0)
                full[j] = v
            elif s == -1:
                full[j] = self.fixval[j]
            else:
                full[j] = full[1]
        return self.natural(full[0], full[1], full[2])

    cdef double natural(self, double w, double p2, double p3):
        if self.kind == 0:
            return clean(self.lp_ml(w))
        if self.kind == 1:
            return clean(self.bp_ml(w, p2, p3))
        if self.kind == 2 or self.kind == 3:
            return clean(self.gp_ml(w, p2, p3))
        if self.kind == 7:
            return clean(self.hb_ibs(w))
        return clean(self.grid_ibs(w, p2, p3))

    cdef double lp_ml(self, double w):
        cdef Py_ssize_t i
        cdef double total = 0.0
        for i in range(self.F1.shape[0]):
            if self.cens[i] != 0.0:
                total += log(w * self.S1[i] + (1.0 - w) * self.S2[i])
            else:
                total += log(w * self.f1[i] + (1.0 - w) * self.f2[i])
        return -total

    cdef double bp_ml(self, double w, double a, double b):
        cdef Py_ssize_t i
        cdef double total = 0.0, u, v, inc, comp
        cdef double lbeta = c_lbeta(a, b)
        for i in range(self.F1.shape[0]):
            u = w * self.F1[i] + (1.0 - w) * self.F2[i]
            v = w * self.S1[i] + (1.0 - w) * self.S2[i]
            if self.cens[i] != 0.0:
                c_betainc_pair(a, b, lbeta, u, v, &inc, &comp)
                total += log(comp)
            else:
                total += c_beta_logpdf(a, b, lbeta, u, v) + log(w * self.f1[i] + (1.0 - w) * self.f2[i])
        return -total

    cdef double gp_ml(self, double w, double mu, double sigma):
        cdef Py_ssize_t i
        cdef double total = 0.0, z, jac
        cdef double lsig = log(sigma)
        cdef double lbt = 0.0
        if self.kind == 3:
            lbt = c_lbeta(0.5 * self.df, 0.5)
        for i in range(self.F1.shape[0]):
            z = (w * self.q1[i] + (1.0 - w) * self.q2[i] - mu) / sigma
            if self.cens[i] != 0.0:
                if self.kind == 2:
                    total += c_log_ndtr(-z)
                else:
                    total += log(c_stdtr(self.df, lbt, -z))
            else:
                jac = log(w * self.r1[i] + (1.0 - w) * self.r2[i]) - lsig
                if self.kind == 2:
                    total += -0.5 * z * z - LOG_SQRT_2PI + jac
                else:
                    total += c_t_logpdf(self.df, self.tconst, z) + jac
        return -total

    cdef double grid_ibs(self, double w, double p2, double p3):
        cdef Py_ssize_t i, k, n = self.Y.shape[0], T = self.Y.shape[1]
        cdef double total = 0.0, s, r, u, v, inc, comp, z
        cdef double lbeta = 0.0
        if self.kind == 5:
            lbeta = c_lbeta(p2, p3)
        for i in range(n):
            for k in range(T):
                if self.W[i, k] == 0.0:
                    continue
                if self.kind == 4:
                    s = w * self.MS1[i, k] + (1.0 - w) * self.MS2[i, k]
                elif self.kind == 5:
                    u = w * self.MF1[i, k] + (1.0 - w) * self.MF2[i, k]
                    v = w * self.MS1[i, k] + (1.0 - w) * self.MS2[i, k]
                    c_betainc_pair(p2, p3, lbeta, u, v, &inc, &comp)
                    s = comp
                else:
                    z = (w * self.MQ1[i, k] + (1.0 - w) * self.MQ2[i, k] - p2) / p3
                    s = c_ndtr(-z)
                r = self.Y[i, k] - s
                total += self.W[i, k] * r * r
        return total / n

    cdef double hb_ibs(self, double w):
        cdef Py_ssize_t i, k, j, jend, n = self.Y.shape[0], T = self.Y.shape[1]
        cdef double total = 0.0, s, r, num, den, lam
        for i in range(n):
            s = 1.0
            j = self.offsets[i]
            jend = self.offsets[i + 1]
            for k in range(T):
                while j < jend and self.kidx[j] <= k:
                    num = w * self.hd1[j] + (1.0 - w) * self.hd2[j]
                    den = w * self.hn1[j] + (1.0 - w) * self.hn2[j]
                    if den > 0.0:
                        lam = num / den
                    else:
                        lam = 0.0
                    s = s * (1.0 - lam)
                    j += 1
                r = self.Y[i, k] - s
                total += self.W[i, k] * r * r
        return total / n


def resolve_params(kind, theta, src, fixval):
    """Map a free parameter vector to the natural (omega, p2, p3) triple."""
    family = FAMILY[kind]
    full = [0.0, 0.0, 0.0]
    for j in range(3):
        s = src[j]
        if s >= 0:
            v = float(theta[s])
            if j == 0:
                v = expit(v)
            elif j == 2 or family == "bp":
                v = exp(min(v, 700.0))
            full[j] = v
        elif s == -1:
            full[j] = float(fixval[j])
        else:
            full[j] = full[1]
    return full


def combo_objective(kind, data, params):
    """Objective (negative log-likelihood or mean IBS) at natural parameters."""
    cdef ComboObjective obj = ComboObjective(kind, data)
    return obj.natural(float(params[0]), float(params[1]), float(params[2]))


def optimize_combo(kind, data, theta0, src, fixval, step, double xtol, double ftol, int maxiter):
    cdef ComboObjective obj = ComboObjective(kind, data, tuple(int(s) for s in src),
                                             tuple(float(v) for v in fixval))
    return _run(obj, theta0, step, xtol, ftol, maxiter)
