"""Censored event times, ensembles, and single-source survival curves.

Curves share a small interface: ``survival(t)``, ``survival_left(t)`` (the
left limit ``S(t-)``), ``cdf(t)`` and, for parametric curves, ``density(t)``.
Each accepts scalars or arrays.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import specfun
from ._backend import kernels as _k
from .exceptions import (ConvergenceError, DegenerateFitError, DomainError, EmptyEnsembleError,
                         NoDensityError)

TAU_MIN = 0.01
FIT_TOL = 1e-8
FIT_MAXITER = 5000


@dataclass(frozen=True)
class CensoredTime:
    """An event time in days; ``event=False`` means right-censored at ``time``."""

    time: float
    event: bool

    def __post_init__(self):
        t = float(self.time)
        if not (math.isfinite(t) and t > 0.0):
            raise DomainError(f"event time must be positive and finite, got {self.time!r}")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "event", bool(self.event))


@dataclass(frozen=True)
class Ensemble:
    """Members of one forecast source sharing a maximum lead time."""

    members: tuple
    max_lead_time: float
    source_id: str = ""
    times: np.ndarray = field(init=False, repr=False, compare=False)
    events: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise EmptyEnsembleError("an ensemble needs at least one member")
        lead = float(self.max_lead_time)
        for m in members:
            if m.event and m.time > lead:
                raise DomainError(f"event at {m.time} exceeds the maximum lead time {lead}")
            if not m.event and m.time != lead:
                raise DomainError(f"censored member at {m.time} is not at the lead time {lead}")
        t = np.array([m.time for m in members], dtype=np.float64)
        e = np.array([m.event for m in members], dtype=bool)
        t.flags.writeable = False
        e.flags.writeable = False
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "max_lead_time", lead)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "events", e)

    @classmethod
    def from_arrays(cls, times, events, max_lead_time, source_id=""):
        members = tuple(CensoredTime(t, e) for t, e in zip(np.ravel(times), np.ravel(events)))
        return cls(members, max_lead_time, source_id)

    def __len__(self):
        return len(self.members)

    @property
    def n_events(self):
        return int(self.events.sum())


def _scalar_or_array(v, like):
    return float(v) if np.ndim(like) == 0 else v


class SurvivalCurve:
    """Base class for evaluable survival functions."""

    has_density = False

    def survival(self, t):
        raise NotImplementedError

    def survival_left(self, t):
        # continuous curves have no jumps
        return self.survival(t)

    def cdf(self, t):
        s = np.asarray(self.survival(t))
        return _scalar_or_array(1.0 - s, t)

    def density(self, t):
        raise NoDensityError(f"{type(self).__name__} has no density")

    def __call__(self, t):
        return self.survival(t)


class StepCurve(SurvivalCurve):
    """Right-continuous step survival function, equal to 1 before the first jump."""

    def __init__(self, jump_times, surv_values):
        jt = np.array(jump_times, dtype=np.float64).ravel()
        sv = np.array(surv_values, dtype=np.float64).ravel()
        if jt.shape != sv.shape:
            raise DomainError("jump_times and surv_values differ in length")
        if jt.size and (np.any(np.diff(jt) <= 0) or np.any(np.diff(sv) > 0)
                        or sv[0] > 1.0 or sv[-1] < 0.0):
            raise DomainError("step curve must have increasing jumps and nonincreasing values")
        jt.flags.writeable = False
        sv.flags.writeable = False
        self.jump_times = jt
        self.surv_values = sv
        self._table = np.concatenate(([1.0], sv))

    def survival(self, t):
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=np.float64), side="right")
        return _scalar_or_array(self._table[idx], t)

    def survival_left(self, t):
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=np.float64), side="left")
        return _scalar_or_array(self._table[idx], t)

    def __repr__(self):
        return f"StepCurve(n_jumps={self.jump_times.size})"


class LogNormalCurve(SurvivalCurve):
    """Log-normal survival curve, optionally with the Student-t estimation correction.

    With ``correction_df = n - 1`` the curve is
    ``S(t) = 1 - G_{n-1}((log t - xi) / (tau * sqrt(1 + 1/n)))``.
    """

    has_density = True

    def __init__(self, xi, tau, correction_df=None):
        if not (tau > 0 and math.isfinite(tau)):
            raise DomainError("tau must be positive")
        if correction_df is not None and not correction_df >= 1:
            raise DomainError("correction_df must be at least 1")
        self.xi = float(xi)
        self.tau = float(tau)
        self.correction_df = None if correction_df is None else int(correction_df)
        if self.correction_df is None:
            self.scale = self.tau
        else:
            n = self.correction_df + 1
            self.scale = self.tau * math.sqrt(1.0 + 1.0 / n)

    def _z(self, t):
        t = np.asarray(t, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return (np.log(np.where(t > 0, t, 0.0)) - self.xi) / self.scale

    def _upper(self, z):
        if self.correction_df is None:
            return _k.ndtr(-z)
        return _k.stdtr(float(self.correction_df), -z)

    def survival(self, t):
        return _scalar_or_array(self._upper(self._z(t)), t)

    def cdf(self, t):
        z = self._z(t)
        if self.correction_df is None:
            return _scalar_or_array(_k.ndtr(z), t)
        return _scalar_or_array(_k.stdtr(float(self.correction_df), z), t)

    def logsurvival(self, t):
        z = self._z(t)
        if self.correction_df is None:
            return _scalar_or_array(_k.log_ndtr(-z), t)
        with np.errstate(divide="ignore"):
            return _scalar_or_array(np.log(self._upper(z)), t)

    def logdensity(self, t):
        ta = np.asarray(t, dtype=np.float64)
        z = self._z(ta)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.correction_df is None:
                lg = -0.5 * z * z - specfun.LOG_SQRT_2PI
            else:
                lg = _k.t_logpdf(float(self.correction_df), z)
            out = lg - np.log(ta) - math.log(self.scale)
        out = np.where(ta > 0, out, -np.inf)
        return _scalar_or_array(out, t)

    def density(self, t):
        return _scalar_or_array(np.exp(np.asarray(self.logdensity(t))), t)

    def median(self):
        return math.exp(self.xi)

    def __repr__(self):
        extra = "" if self.correction_df is None else f", correction_df={self.correction_df}"
        return f"LogNormalCurve(xi={self.xi:.6g}, tau={self.tau:.6g}{extra})"


def _arrays(ens):
    if isinstance(ens, Ensemble):
        return ens.times, ens.events
    t, e = ens
    return np.asarray(t, dtype=np.float64), np.asarray(e, dtype=bool)


def km_estimate(ens):
    """Kaplan-Meier estimate; events precede censorings at tied times."""
    t, e = _arrays(ens)
    if t.size == 0:
        raise EmptyEnsembleError("an ensemble needs at least one member")
    jt, sv = _k.km_steps(t, e)
    return StepCurve(jt, sv)


def lognormal_negloglik(ens, xi, tau):
    """Negative censored log-normal log-likelihood of an ensemble."""
    t, e = _arrays(ens)
    return float(_k.lognormal_negloglik(t, e, float(xi), float(tau)))


def lognormal_ml_fit(ens, tau_min=TAU_MIN, tol=FIT_TOL, maxiter=FIT_MAXITER):
    """Censored maximum-likelihood log-normal fit.

    Censored members contribute ``log S(t)`` and events ``log f(t)``.

    Raises
    ------
    DegenerateFitError
        With fewer than two events or when all event times coincide.
    ConvergenceError
        If the simplex search hits ``maxiter``.
    """
    t, e = _arrays(ens)
    xi, tau, status = _k.fit_lognormal_batch(t[None, :], e[None, :], tau_min, tol, maxiter)
    if status[0] == 1:
        raise DegenerateFitError("need at least two distinct event times for a log-normal fit")
    if status[0] == 2:
        raise ConvergenceError("log-normal fit did not converge")
    return LogNormalCurve(xi[0], tau[0])


def _minibs_targets(t, e, t_max):
    days = np.arange(1, int(t_max) + 1, dtype=np.float64)
    Y = (t[:, None] > days[None, :]).astype(np.float64)
    # censored members are known to survive up to their censoring time only
    W = np.where(e[:, None], 1.0, (days[None, :] <= t[:, None]).astype(np.float64))
    Y = np.where(e[:, None], Y, 1.0)
    return days, Y, W


def lognormal_minibs_fit(ens, t_max, tau_min=TAU_MIN, tol=FIT_TOL, maxiter=FIT_MAXITER):
    """Log-normal fit minimising the summed member-wise integrated Brier score.

    Each member is scored as a realization on days ``1..t_max``; a censored
    member only contributes up to its censoring time.
    """
    t, e = _arrays(ens)
    if t.size == 0:
        raise EmptyEnsembleError("an ensemble needs at least one member")
    days, Y, W = _minibs_targets(t, e, t_max)
    logd = np.log(days)

    def objective(theta):
        tau = max(math.exp(min(theta[1], 700.0)), tau_min)
        s = _k.ndtr(-(logd - theta[0]) / tau)
        r = Y - s[None, :]
        return float(np.sum(W * r * r))

    y = np.log(t)
    xi0 = float(np.mean(y))
    tau0 = max(float(np.std(y)), tau_min)
    res = specfun.minimize(objective, [xi0, math.log(tau0)], tol=tol, maxiter=maxiter,
                           step=[0.5 * tau0 + 0.05, 0.25], full_output=True)
    return LogNormalCurve(res.x[0], max(math.exp(min(res.x[1], 700.0)), tau_min))


def minibs_objective(ens, xi, tau, t_max):
    """Summed member-wise IBS of a log-normal curve (the minimised quantity)."""
    t, e = _arrays(ens)
    days, Y, W = _minibs_targets(t, e, t_max)
    s = _k.ndtr(-(np.log(days) - xi) / tau)
    return float(np.sum(W * (Y - s[None, :]) ** 2))


def corrected_curve(fit, n_k):
    """Student-t corrected version of a fitted log-normal curve.

    The standardized log time is inflated by ``sqrt(1 + 1/n_k)`` and passed
    through a t law with ``n_k - 1`` degrees of freedom. Oriented so that the
    result tends to ``fit`` as ``n_k`` grows.
    """
    if fit.correction_df is not None:
        raise DomainError("curve is already corrected")
    if not n_k >= 2:
        raise DomainError("n_k must be at least 2")
    return LogNormalCurve(fit.xi, fit.tau, correction_df=int(n_k) - 1)


def eval_survival(curve, t):
    if np.any(np.asarray(t) < 0):
        raise DomainError("t must be nonnegative")
    return curve.survival(t)


def eval_density(curve, t):
    if not curve.has_density:
        raise NoDensityError(f"{type(curve).__name__} has no density")
    return curve.density(t)
