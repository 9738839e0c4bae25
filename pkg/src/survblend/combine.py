"""Combination of single-source survival curves.

Array-level pool functions (``pool_*``) work on precomputed source CDF and
survival values and are shared with the simulation harness; the curve-level
functions (``*_combine``) wrap them into evaluable curves.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from ._backend import kernels as _k
from .exceptions import DomainError, EmptyEnsembleError
from .survcurve import StepCurve, SurvivalCurve, _arrays, _scalar_or_array, lognormal_ml_fit

GP_EPS = 1e-12

METHODS = ("LP", "BP", "GP", "GPt", "HB", "LP0", "MERGE")
RESTRICTIONS = ("full", "fix_mean", "fix_mean_var", "fix_alpha_eq_beta", "fixed_equal_weights")

_ALLOWED = {
    "LP": ("full",),
    "BP": ("full", "fix_alpha_eq_beta"),
    "GP": ("full", "fix_mean", "fix_mean_var"),
    "GPt": ("full", "fix_mean", "fix_mean_var"),
    "HB": ("full",),
    "LP0": ("fixed_equal_weights",),
    "MERGE": ("full",),
}


@dataclass(frozen=True)
class ComboParams:
    """Combination method with its parameters.

    ``omega`` weights source 1. ``alpha``/``beta`` apply to BP, ``mu``/``sigma``
    to GP and GPt, ``df`` to GPt only. A GPt template with ``df=None`` takes
    the number of training pairs minus one at estimation time.
    """

    method: str
    omega: float = 0.5
    alpha: float = 1.0
    beta: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0
    df: int = None
    restriction: str = "full"

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown combination method {self.method!r}")
        if self.restriction not in _ALLOWED[self.method]:
            raise DomainError(f"restriction {self.restriction!r} does not apply to {self.method}")
        if not 0.0 <= self.omega <= 1.0:
            raise DomainError("omega must lie in [0, 1]")
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("alpha and beta must be positive")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if self.method == "GPt" and self.df is not None and self.df < 1:
            raise DomainError("GPt needs df >= 1")
        if self.restriction == "fix_alpha_eq_beta" and self.alpha != self.beta:
            raise DomainError("restricted BP needs alpha == beta")
        if self.restriction in ("fix_mean", "fix_mean_var") and self.mu != 0.0:
            raise DomainError("restricted GP needs mu == 0")
        if self.restriction == "fix_mean_var" and self.sigma != 1.0:
            raise DomainError("restricted GP needs sigma == 1")
        if self.restriction == "fixed_equal_weights" and self.omega != 0.5:
            raise DomainError("LP0 uses omega == 0.5")

    def with_values(self, **kw):
        return replace(self, **kw)

    def as_dict(self):
        return {"method": self.method, "omega": self.omega, "alpha": self.alpha, "beta": self.beta,
                "mu": self.mu, "sigma": self.sigma, "df": self.df,
                "restriction": self.restriction}


# ---------------------------------------------------------------------------
# array-level pools over K sources (weights sum to one)
# ---------------------------------------------------------------------------

def _mix(weights, arrays):
    out = weights[0] * np.asarray(arrays[0], dtype=np.float64)
    for w, a in zip(weights[1:], arrays[1:]):
        out = out + w * np.asarray(a, dtype=np.float64)
    return out


def clamped_quantile(F):
    """Normal quantile of CDF values clamped to ``[eps, 1 - eps]``."""
    return _k.ndtri(np.clip(np.asarray(F, dtype=np.float64), GP_EPS, 1.0 - GP_EPS))


def pool_lp(weights, S):
    """Linear pool survival ``sum_k w_k S_k``."""
    return _mix(weights, S)


def pool_bp(weights, alpha, beta, F, S):
    """Beta-transformed linear pool survival ``1 - B_{a,b}(sum_k w_k F_k)``."""
    u = np.clip(_mix(weights, F), 0.0, 1.0)
    v = np.clip(_mix(weights, S), 0.0, 1.0)
    return _k.betaincc(float(alpha), float(beta), u, v)


def gp_index(weights, mu, sigma, F):
    """Standardized pooled normal score ``(sum_k w_k Phi^{-1}(F_k) - mu) / sigma``."""
    q = _mix(weights, [clamped_quantile(f) for f in F])
    return (q - mu) / sigma


def pool_gp(weights, mu, sigma, F, df=None):
    """Generalized (probit) pool survival; ``df`` switches the outer law to Student t."""
    z = gp_index(weights, mu, sigma, F)
    if df is None:
        return _k.ndtr(-z)
    return _k.stdtr(float(df), -z)


def density_lp(weights, f):
    return _mix(weights, f)


def density_bp(weights, alpha, beta, F, S, f):
    u = np.clip(_mix(weights, F), 0.0, 1.0)
    v = np.clip(_mix(weights, S), 0.0, 1.0)
    with np.errstate(over="ignore"):
        return np.exp(_k.beta_logpdf(float(alpha), float(beta), u, v)) * _mix(weights, f)


def density_gp(weights, mu, sigma, F, f, df=None):
    z = gp_index(weights, mu, sigma, F)
    # d/dt Phi^{-1}(F_k(t)) = f_k / phi(q_k)
    jac = _mix(weights, [fk * math.sqrt(2.0 * math.pi) * np.exp(0.5 * clamped_quantile(Fk) ** 2)
                         for Fk, fk in zip(F, f)])
    if df is None:
        outer = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    else:
        outer = np.exp(_k.t_logpdf(float(df), z))
    return outer * jac / sigma


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

class CombinedCurve(SurvivalCurve):
    """Lazily evaluated combination of parametric or step source curves."""

    def __init__(self, params, sources, weights=None):
        if len(sources) < 1:
            raise DomainError("need at least one source curve")
        if weights is None:
            if len(sources) != 2:
                raise DomainError("give explicit weights for more than two sources")
            weights = (params.omega, 1.0 - params.omega)
        weights = tuple(float(w) for w in weights)
        if len(weights) != len(sources) or abs(sum(weights) - 1.0) > 1e-12 or min(weights) < 0:
            raise DomainError("weights must be nonnegative, one per source, summing to 1")
        if params.method == "GPt" and params.df is None:
            raise DomainError("a GPt curve needs df")
        self.params = params
        self.sources = tuple(sources)
        self.weights = weights
        self.has_density = all(s.has_density for s in self.sources)

    def _evaluate(self, S, F):
        p = self.params
        if p.method in ("LP", "LP0"):
            return pool_lp(self.weights, S)
        if p.method == "BP":
            return pool_bp(self.weights, p.alpha, p.beta, F, S)
        if p.method == "GP":
            return pool_gp(self.weights, p.mu, p.sigma, F)
        if p.method == "GPt":
            return pool_gp(self.weights, p.mu, p.sigma, F, df=p.df)
        raise DomainError(f"{p.method} is not a pooled combination")

    def survival(self, t):
        S = [np.asarray(s.survival(t), dtype=np.float64) for s in self.sources]
        F = [np.asarray(s.cdf(t), dtype=np.float64) for s in self.sources]
        return _scalar_or_array(self._evaluate(S, F), t)

    def survival_left(self, t):
        S = [np.asarray(s.survival_left(t), dtype=np.float64) for s in self.sources]
        return _scalar_or_array(self._evaluate(S, [1.0 - s for s in S]), t)

    def density(self, t):
        if not self.has_density:
            return super().density(t)
        p = self.params
        F = [np.asarray(s.cdf(t), dtype=np.float64) for s in self.sources]
        f = [np.asarray(s.density(t), dtype=np.float64) for s in self.sources]
        if p.method in ("LP", "LP0"):
            out = density_lp(self.weights, f)
        elif p.method == "BP":
            S = [np.asarray(s.survival(t), dtype=np.float64) for s in self.sources]
            out = density_bp(self.weights, p.alpha, p.beta, F, S, f)
        else:
            out = density_gp(self.weights, p.mu, p.sigma, F, f,
                             df=p.df if p.method == "GPt" else None)
        return _scalar_or_array(out, t)

    def __repr__(self):
        return f"CombinedCurve({self.params.method}, weights={self.weights})"


class HazardBlendCurve(StepCurve):
    """Step curve from blending two ensembles on the hazard scale."""

    def __init__(self, params, ens1, ens2, jump_times, surv_values):
        super().__init__(jump_times, surv_values)
        self.params = params
        self.ensembles = (ens1, ens2)


def hb_steps(t1, e1, t2, e2, omega):
    """Jump times and survival values of the hazard blend.

    Times where the blended hazard is zero (including an empty blended risk
    set) carry no jump.
    """
    times, d1, n1, d2, n2 = _k.hb_counts(t1, e1, t2, e2)
    num = omega * d1 + (1.0 - omega) * d2
    den = omega * n1 + (1.0 - omega) * n2
    lam = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)
    keep = lam > 0.0
    return times[keep], np.cumprod(1.0 - lam[keep])


def lp_combine(f1, f2, omega):
    """Linear pool ``S = 1 - [w F1 + (1 - w) F2]``."""
    return CombinedCurve(ComboParams("LP", omega=omega), [f1, f2])


def lp0_combine(f1, f2):
    return CombinedCurve(ComboParams("LP0", omega=0.5, restriction="fixed_equal_weights"), [f1, f2])


def bp_combine(f1, f2, omega, alpha, beta):
    """Beta-transformed linear pool."""
    return CombinedCurve(ComboParams("BP", omega=omega, alpha=alpha, beta=beta), [f1, f2])


def gp_combine(f1, f2, omega, mu, sigma):
    """Probit-scale pool ``S = 1 - Phi[(w q1 + (1 - w) q2 - mu) / sigma]``."""
    return CombinedCurve(ComboParams("GP", omega=omega, mu=mu, sigma=sigma), [f1, f2])


def gpt_combine(f1, f2, omega, mu, sigma, df):
    """As :func:`gp_combine` with a Student-t outer CDF on ``df`` degrees of freedom."""
    if not df >= 1:
        raise DomainError("df must be at least 1")
    return CombinedCurve(ComboParams("GPt", omega=omega, mu=mu, sigma=sigma, df=int(df)), [f1, f2])


def hb_combine(ens1, ens2, omega):
    """Hazard blend of two raw ensembles."""
    t1, e1 = _arrays(ens1)
    t2, e2 = _arrays(ens2)
    if t1.size == 0 or t2.size == 0:
        raise EmptyEnsembleError("hazard blending needs two nonempty ensembles")
    jt, sv = hb_steps(t1, e1, t2, e2, float(omega))
    return HazardBlendCurve(ComboParams("HB", omega=omega), ens1, ens2, jt, sv)


def merge_combine(ens1, ens2, **fit_kw):
    """Log-normal ML fit to the concatenated members of both ensembles."""
    t1, e1 = _arrays(ens1)
    t2, e2 = _arrays(ens2)
    return lognormal_ml_fit((np.concatenate([t1, t2]), np.concatenate([e1, e2])), **fit_kw)


def combine(params, f1=None, f2=None, ens1=None, ens2=None):
    """Build the combined curve described by ``params``.

    Pooled methods take fitted curves ``f1``/``f2``; HB and MERGE take raw
    ensembles.
    """
    m = params.method
    if m == "HB":
        return hb_combine(ens1, ens2, params.omega)
    if m == "MERGE":
        return merge_combine(ens1, ens2)
    return CombinedCurve(params, [f1, f2])


__all__ = [
    "ComboParams", "CombinedCurve", "HazardBlendCurve", "METHODS", "RESTRICTIONS",
    "bp_combine", "combine", "gp_combine", "gpt_combine", "hb_combine", "hb_steps", "lp0_combine",
    "lp_combine", "merge_combine", "pool_bp", "pool_gp", "pool_lp",
]
