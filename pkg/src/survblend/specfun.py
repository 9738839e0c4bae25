"""Special functions and the simplex optimizer used throughout the package.

All functions accept scalars or arrays; scalar input gives a Python float.
"""
from dataclasses import dataclass

import numpy as np

from ._backend import kernels as _k
from .exceptions import ConvergenceError, DomainError

SQRT_2PI = float(np.sqrt(2.0 * np.pi))
LOG_SQRT_2PI = float(0.5 * np.log(2.0 * np.pi))

DEFAULT_TOL = 1e-8
DEFAULT_MAXITER = 5000


def _ret(x, like):
    if np.ndim(like) == 0:
        return float(x)
    return np.asarray(x, dtype=np.float64)


def normal_cdf(x):
    """Standard normal CDF, saturating to 0 and 1 in the tails."""
    return _ret(_k.ndtr(x), x)


def normal_logcdf(x):
    """Logarithm of the standard normal CDF, accurate far into the lower tail."""
    return _ret(_k.log_ndtr(x), x)


def normal_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    return _ret(np.exp(-0.5 * x * x) / SQRT_2PI, x)


def _check_open_unit(p, name="p"):
    p = np.asarray(p, dtype=np.float64)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError(f"{name} must lie strictly between 0 and 1")
    return p


def normal_quantile(p):
    """Standard normal quantile function.

    Raises
    ------
    DomainError
        If any ``p`` is outside the open unit interval.
    """
    q = _check_open_unit(p)
    return _ret(_k.ndtri(q), p)


def normal_quantile_deriv(p):
    """Derivative of the normal quantile, ``1 / phi(Phi^{-1}(p))``."""
    q = _check_open_unit(p)
    z = _k.ndtri(q)
    return _ret(SQRT_2PI * np.exp(0.5 * z * z), p)


def _check_shape(alpha, beta):
    if not (alpha > 0 and beta > 0):
        raise DomainError("beta shape parameters must be positive")


def _check_unit(x):
    xa = np.asarray(x, dtype=np.float64)
    if np.any(~((xa >= 0.0) & (xa <= 1.0))):
        raise DomainError("x must lie in [0, 1]")
    return xa


def beta_cdf(x, alpha, beta):
    """Regularised incomplete beta function ``I_x(alpha, beta)``."""
    _check_shape(alpha, beta)
    xa = _check_unit(x)
    return _ret(_k.betainc(alpha, beta, xa, 1.0 - xa), x)


def beta_sf(x, alpha, beta, y=None):
    """Upper tail ``1 - I_x(alpha, beta)``.

    ``y`` may carry ``1 - x`` computed without rounding (e.g. from survival
    probabilities) so that the far upper tail keeps full precision.
    """
    _check_shape(alpha, beta)
    xa = _check_unit(x)
    ya = 1.0 - xa if y is None else np.asarray(y, dtype=np.float64)
    return _ret(_k.betaincc(alpha, beta, xa, ya), x)


def beta_pdf(x, alpha, beta):
    """Density of the Beta(alpha, beta) law on [0, 1]."""
    _check_shape(alpha, beta)
    xa = _check_unit(x)
    with np.errstate(over="ignore"):
        return _ret(np.exp(_k.beta_logpdf(alpha, beta, xa, 1.0 - xa)), x)


def student_t_cdf(x, df):
    """CDF of Student's t with ``df`` degrees of freedom.

    Raises
    ------
    DomainError
        If ``df < 1``.
    """
    if not df >= 1:
        raise DomainError("degrees of freedom must be at least 1")
    return _ret(_k.stdtr(float(df), x), x)


def student_t_pdf(x, df):
    if not df >= 1:
        raise DomainError("degrees of freedom must be at least 1")
    return _ret(np.exp(_k.t_logpdf(float(df), x)), x)


@dataclass(frozen=True)
class OptimizeResult:
    x: np.ndarray
    fun: float
    nit: int
    nfev: int
    converged: bool


def default_step(x0):
    """Initial simplex offsets: 5% of each coordinate, or 0.00025 at zero."""
    x0 = np.asarray(x0, dtype=np.float64)
    return np.where(x0 != 0.0, 0.05 * x0, 0.00025)


def minimize(objective, start, tol=DEFAULT_TOL, maxiter=DEFAULT_MAXITER, step=None,
             full_output=False):
    """Minimise ``objective`` with a deterministic Nelder-Mead simplex.

    Parameters
    ----------
    objective : callable
        Maps a float array of length k (1 <= k <= 3) to a float. NaN is
        treated as +inf.
    start : array_like
        Starting point; the objective must be finite there.
    tol : float
        Stop once every vertex is within ``tol`` of the best one and the
        objective spread is at most ``tol``.
    maxiter : int
        Iteration cap.
    step : array_like, optional
        Initial simplex offsets, see :func:`default_step`.
    full_output : bool
        Return an :class:`OptimizeResult` instead of the point.

    Raises
    ------
    ConvergenceError
        When the cap is reached first; ``err.result`` carries the last simplex best.
    """
    x0 = np.atleast_1d(np.asarray(start, dtype=np.float64))
    if not 1 <= x0.size <= 3:
        raise DomainError("minimize supports 1 to 3 parameters")
    f0 = objective(x0.copy())
    if not np.isfinite(f0):
        raise DomainError("objective is not finite at the starting point")
    step = default_step(x0) if step is None else np.broadcast_to(np.asarray(step, float), x0.shape)
    x, fx, nit, nfev, ok = _k.nelder_mead(objective, list(x0), list(step), tol, tol, maxiter)
    res = OptimizeResult(np.asarray(x, dtype=np.float64), float(fx), int(nit), int(nfev), bool(ok))
    if not ok:
        raise ConvergenceError(f"simplex did not converge in {maxiter} iterations", res)
    return res if full_output else res.x
