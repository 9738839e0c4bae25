"""Estimation of combination parameters from past forecast-observation pairs.

Parameters are fitted either by maximum likelihood or by minimising the
training-set integrated Brier score. Constrained parameters are searched on
an unconstrained scale (logit for the weight, log for positive parameters).
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels as _k
from .combine import ComboParams
from .evaluate import brier_targets, day_grid
from .exceptions import ConvergenceError, DegenerateFitError, DomainError, InsufficientHistoryError
from .survcurve import CensoredTime, _arrays

TOL = 1e-8
MAXITER = 5000
START_STEP = 0.5
MULTISTART_BELOW = 30
N_EXTRA_STARTS = 3
MULTISTART_KEY = 0x2F1C0DE

# GPt parameters come from the normal-outer likelihood and the Student-t law is
# applied at prediction time; "t" fits them under the t likelihood instead.
GPT_LIKELIHOOD = "normal"


@dataclass
class TrainingPair:
    """One year's ensembles, realized event time and fitted source curves."""

    year_id: object
    ensembles: tuple
    realized: CensoredTime
    fitted: tuple = None

    def __post_init__(self):
        self.ensembles = tuple(self.ensembles)
        if self.fitted is not None:
            self.fitted = tuple(self.fitted)
            if len(self.fitted) != len(self.ensembles):
                raise DomainError("need one fitted curve per ensemble")


@dataclass
class TrainingSet:
    pairs: list

    def __post_init__(self):
        self.pairs = list(self.pairs)
        if not self.pairs:
            raise InsufficientHistoryError("training set is empty")
        k = {len(p.ensembles) for p in self.pairs}
        if len(k) != 1:
            raise DomainError("all pairs need the same number of sources")

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class EstimateResult:
    params: ComboParams
    objective: float
    converged: bool
    nfev: int
    n_pairs: int
    theta: np.ndarray = field(repr=False, default=None)


# ---------------------------------------------------------------------------
# free-parameter layouts
# ---------------------------------------------------------------------------

def layout(template, estimator, gpt_likelihood=GPT_LIKELIHOOD):
    """Objective kind and free-parameter mapping for a method template.

    Returns
    -------
    kind : str
    src : tuple of int
        Per natural slot (omega, p2, p3): free index, -1 for fixed at
        ``fixval``, -2 for tied to slot 1.
    fixval : tuple of float
    """
    m, r = template.method, template.restriction
    if estimator not in ("ml", "minibs"):
        raise DomainError(f"unknown estimator {estimator!r}")
    ml = estimator == "ml"
    if m in ("LP", "LP0"):
        return ("lp_ml" if ml else "lp_ibs"), (0, -1, -1), (0.0, 0.0, 0.0)
    if m == "HB":
        if ml:
            raise DomainError("the hazard blend has no likelihood; use minibs")
        return "hb_ibs", (0, -1, -1), (0.0, 0.0, 0.0)
    if m == "BP":
        kind = "bp_ml" if ml else "bp_ibs"
        if r == "fix_alpha_eq_beta":
            return kind, (0, 1, -2), (0.0, 0.0, 0.0)
        return kind, (0, 1, 2), (0.0, 0.0, 0.0)
    if m in ("GP", "GPt"):
        if m == "GPt":
            if not ml:
                raise DomainError("GPt is estimated by maximum likelihood only")
            if gpt_likelihood not in ("normal", "t"):
                raise DomainError(f"unknown GPt likelihood {gpt_likelihood!r}")
            kind = "gpt_ml" if gpt_likelihood == "t" else "gp_ml"
        else:
            kind = "gp_ml" if ml else "gp_ibs"
        if r == "fix_mean_var":
            return kind, (0, -1, -1), (0.0, 0.0, 1.0)
        if r == "fix_mean":
            return kind, (0, -1, 1), (0.0, 0.0, 0.0)
        return kind, (0, 1, 2), (0.0, 0.0, 0.0)
    raise DomainError(f"{m} has no estimated parameters")


def _params_from_natural(template, nat):
    w, p2, p3 = (float(v) for v in nat)
    m = template.method
    if m == "BP":
        return template.with_values(omega=w, alpha=p2, beta=p3)
    if m in ("GP", "GPt"):
        return template.with_values(omega=w, mu=p2, sigma=p3)
    return template.with_values(omega=w)


def optimize_params(template, estimator, data, n_pairs, tol=TOL, maxiter=MAXITER,
                    multistart=None, gpt_likelihood=GPT_LIKELIHOOD):
    """Run the simplex search for ``template`` on prepared objective data.

    ``data`` follows the layout of the kernel objectives (see
    :func:`ml_data`, :func:`ibs_data`, :func:`hb_ibs_data`). With fewer than
    30 pairs three extra random starts are tried and the best kept.
    """
    if template.method == "LP0":
        return EstimateResult(template.with_values(omega=0.5), math.nan, True, 0, n_pairs)
    kind, src, fixval = layout(template, estimator, gpt_likelihood)
    nfree = max(src) + 1
    if multistart is None:
        multistart = n_pairs < MULTISTART_BELOW
    starts = [np.zeros(nfree)]
    if multistart:
        rng = np.random.Generator(np.random.Philox(key=MULTISTART_KEY))
        starts += [rng.standard_normal(nfree) for _ in range(N_EXTRA_STARTS)]
    step = [START_STEP] * nfree
    best = None
    for theta0 in starts:
        x, fx, _, nfev, ok = _k.optimize_combo(kind, data, list(theta0), src, fixval, step,
                                               tol, tol, maxiter)
        if best is None or fx < best[1]:
            best = (np.asarray(x), float(fx), ok, nfev)
    x, fx, ok, nfev = best
    if not math.isfinite(fx):
        raise DegenerateFitError(f"{kind} objective is not finite at any start")
    nat = _k.resolve_params(kind, x, src, fixval)
    params = _params_from_natural(template, nat)
    res = EstimateResult(params, fx, bool(ok), int(nfev), n_pairs, x)
    if not ok:
        raise ConvergenceError(f"{kind} estimation did not converge", res)
    return res


def objective_value(template, estimator, data, params, gpt_likelihood="t"):
    """Objective at natural parameters (negative log-likelihood or mean IBS).

    For GPt the default is the likelihood of the Student-t curve itself.
    """
    kind, _, _ = layout(template, estimator, gpt_likelihood)
    if template.method == "BP":
        nat = (params.omega, params.alpha, params.beta)
    elif template.method in ("GP", "GPt"):
        nat = (params.omega, params.mu, params.sigma)
    else:
        nat = (params.omega, 0.0, 0.0)
    return float(_k.combo_objective(kind, data, nat))


# ---------------------------------------------------------------------------
# objective data
# ---------------------------------------------------------------------------

def _require_fitted(train):
    for p in train.pairs:
        if p.fitted is None or len(p.fitted) != 2:
            raise DomainError("every training pair needs two fitted source curves")


def ml_data(train, df=None):
    """Source CDF, survival and density values at each realization.

    Pairs whose observed event has zero density under both sources are
    dropped with a warning.
    """
    _require_fitted(train)
    rows = []
    for p in train.pairs:
        t = p.realized.time
        f1, f2 = p.fitted
        if not (f1.has_density and f2.has_density):
            raise DomainError("maximum likelihood needs parametric source curves")
        row = (f1.cdf(t), f2.cdf(t), f1.survival(t), f2.survival(t), f1.density(t),
               f2.density(t), 0.0 if p.realized.event else 1.0)
        if p.realized.event and row[4] <= 0.0 and row[5] <= 0.0:
            warnings.warn(f"dropping year {p.year_id!r}: realization outside the forecast support",
                          RuntimeWarning, stacklevel=2)
            continue
        rows.append(row)
    if not rows:
        raise DegenerateFitError("no usable training pairs")
    arr = np.array(rows, dtype=np.float64)
    if np.all(arr[:, 6] == 1.0):
        raise DegenerateFitError("every training realization is censored")
    data = {k: np.ascontiguousarray(arr[:, i])
            for i, k in enumerate(("F1", "F2", "S1", "S2", "f1", "f2", "cens"))}
    data["df"] = float(len(rows) - 1 if df is None else df)
    return data


def ibs_data(train, t_max, t_min=0):
    """Source curves and survival indicators on the integer day grid."""
    _require_fitted(train)
    days = day_grid(t_max, t_min)
    times = np.array([p.realized.time for p in train.pairs])
    events = np.array([p.realized.event for p in train.pairs])
    Y, W = brier_targets(times, events, days)
    S1 = np.array([p.fitted[0].survival(days) for p in train.pairs], dtype=np.float64)
    S2 = np.array([p.fitted[1].survival(days) for p in train.pairs], dtype=np.float64)
    F1 = np.array([p.fitted[0].cdf(days) for p in train.pairs], dtype=np.float64)
    F2 = np.array([p.fitted[1].cdf(days) for p in train.pairs], dtype=np.float64)
    return {"F1": F1, "F2": F2, "S1": S1, "S2": S2, "Y": Y, "W": W}


def hb_ibs_data(ensemble_pairs, times, events, t_max, t_min=0):
    """Objective data for the hazard blend.

    ``ensemble_pairs`` holds ``(t1, e1, t2, e2)`` member arrays per pair.
    Each distinct event time is stored with the grid index from which its
    jump applies.
    """
    days = day_grid(t_max, t_min)
    Y, W = brier_targets(times, events, days)
    offsets = [0]
    cols = {k: [] for k in ("d1", "n1", "d2", "n2", "kidx")}
    for t1, e1, t2, e2 in ensemble_pairs:
        jt, d1, n1, d2, n2 = _k.hb_counts(t1, e1, t2, e2)
        cols["d1"].append(d1)
        cols["n1"].append(n1)
        cols["d2"].append(d2)
        cols["n2"].append(n2)
        cols["kidx"].append(np.searchsorted(days, jt, side="left"))
        offsets.append(offsets[-1] + jt.size)
    data = {k: (np.concatenate(v) if v else np.zeros(0)) for k, v in cols.items()}
    data["kidx"] = data["kidx"].astype(np.int64)
    data["offsets"] = np.asarray(offsets, dtype=np.int64)
    data["Y"] = Y
    data["W"] = W
    return data


def _hb_from_train(train, t_max, t_min):
    ens = []
    for p in train.pairs:
        (t1, e1), (t2, e2) = (_arrays(x) for x in p.ensembles[:2])
        ens.append((t1, e1, t2, e2))
    times = np.array([p.realized.time for p in train.pairs])
    events = np.array([p.realized.event for p in train.pairs])
    return hb_ibs_data(ens, times, events, t_max, t_min)


# ---------------------------------------------------------------------------
# public estimators
# ---------------------------------------------------------------------------

def _template(spec):
    if isinstance(spec, ComboParams):
        return spec
    from .registry import template_for
    return template_for(spec)


def ml_estimate(spec, train, tol=TOL, maxiter=MAXITER, full_output=False,
                gpt_likelihood=GPT_LIKELIHOOD):
    """Maximum-likelihood combination parameters.

    Censored realizations contribute the log of the combined survival
    probability in place of the log density.

    Parameters
    ----------
    spec : ComboParams or str
        Method template; fixed parameters are taken from it.
    train : TrainingSet
    gpt_likelihood : {"normal", "t"}
        For GPt: fit (omega, mu, sigma) under the normal-outer likelihood and
        predict with the t law (default), or fit under the t likelihood.
    """
    template = _template(spec)
    if template.method == "LP0":
        res = optimize_params(template, "ml", None, len(train))
        return res if full_output else res.params
    if template.method not in ("LP", "BP", "GP", "GPt"):
        raise DomainError(f"{template.method} cannot be estimated by maximum likelihood")
    df = template.df if template.method == "GPt" else None
    data = ml_data(train, df=df)
    if template.method == "GPt" and template.df is None:
        template = template.with_values(df=int(data["df"]))
    res = optimize_params(template, "ml", data, len(train), tol=tol, maxiter=maxiter,
                          gpt_likelihood=gpt_likelihood)
    return res if full_output else res.params


def minibs_estimate(spec, train, t_max, t_min=0, tol=TOL, maxiter=MAXITER, full_output=False):
    """Combination parameters minimising the mean training-set IBS."""
    template = _template(spec)
    if template.method == "LP0":
        res = optimize_params(template, "minibs", None, len(train))
        return res if full_output else res.params
    if template.method == "HB":
        data = _hb_from_train(train, t_max, t_min)
    elif template.method in ("LP", "BP", "GP"):
        data = ibs_data(train, t_max, t_min)
    else:
        raise DomainError(f"{template.method} cannot be estimated by IBS minimisation")
    res = optimize_params(template, "minibs", data, len(train), tol=tol, maxiter=maxiter)
    return res if full_output else res.params


def log_likelihood(params, train):
    """Combined log-likelihood of ``train`` at fixed parameters."""
    template = params
    if params.method == "GPt" and params.df is None:
        raise DomainError("GPt needs df")
    data = ml_data(train, df=params.df)
    return -objective_value(template, "ml", data, params)


def training_ibs(params, train, t_max, t_min=0):
    """Mean training-set IBS at fixed parameters."""
    if params.method == "HB":
        data = _hb_from_train(train, t_max, t_min)
    else:
        data = ibs_data(train, t_max, t_min)
    return objective_value(params, "minibs", data, params)
