"""Brier and integrated Brier scores, PIT values, and score reports."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CensoredRealizationError, DomainError

PIT_MEAN_REF = 0.5
PIT_SD_REF = 1.0 / math.sqrt(12.0)
N_BINS = 10

_DEFAULT_RNG_KEY = 0x5EED


def _default_rng():
    return np.random.Generator(np.random.Philox(key=_DEFAULT_RNG_KEY))


def day_grid(t_max, t_min=0):
    """Integer scoring days ``t_min + 1, ..., t_max``."""
    t_max, t_min = int(t_max), int(t_min)
    if t_max < t_min + 1:
        raise DomainError("t_max must exceed t_min")
    return np.arange(t_min + 1, t_max + 1, dtype=np.float64)


def brier_targets(times, events, days):
    """Survival indicators and weights for realizations on a day grid.

    An event at ``t`` gives ``Y = 1{t > day}`` with unit weight. A realization
    censored at ``c`` is known to survive through ``c``; later days get zero
    weight.

    Returns
    -------
    Y, W : ndarray, shape (n, len(days))
    """
    t = np.atleast_1d(np.asarray(times, dtype=np.float64))[:, None]
    e = np.atleast_1d(np.asarray(events, dtype=bool))[:, None]
    d = np.asarray(days, dtype=np.float64)[None, :]
    Y = np.where(e, (t > d).astype(np.float64), 1.0)
    W = np.where(e, 1.0, (d <= t).astype(np.float64))
    return Y, W


def brier_score(curves, realized, t):
    """Mean of ``(1{T_i > t} - S_i(t))^2`` over realizations.

    Terms with a realization censored before ``t`` are skipped; NaN if none remain.
    """
    if len(curves) != len(realized) or not curves:
        raise DomainError("need equally many curves and realizations, at least one")
    total, m = 0.0, 0
    for c, r in zip(curves, realized):
        if not r.event and t > r.time:
            continue
        y = 1.0 if (r.time > t or not r.event) else 0.0
        total += (y - float(c.survival(float(t)))) ** 2
        m += 1
    return total / m if m else math.nan


def ibs(curve, realized, t_max, t_min=0):
    """Integrated Brier score summed over integer days ``t_min + 1 .. t_max``.

    A censored realization contributes only the days up to its censoring time.
    """
    days = day_grid(t_max, t_min)
    Y, W = brier_targets(realized.time, realized.event, days)
    s = np.asarray(curve.survival(days), dtype=np.float64)
    return float(np.sum(W[0] * (Y[0] - s) ** 2))


def ibs_matrix(S, Y, W):
    """Per-realization IBS from survival values on a grid, shape (n, T) each."""
    return np.sum(W * (Y - S) ** 2, axis=1)


def randomized_pit(F_left, F_right, u):
    """``F(t-) + u (F(t) - F(t-))``, exact where the CDF is continuous."""
    F_left = np.asarray(F_left, dtype=np.float64)
    F_right = np.asarray(F_right, dtype=np.float64)
    return np.where(F_right > F_left, F_left + u * (F_right - F_left), F_right)


def pit(curve, realized, rng=None, u=None):
    """PIT value ``F(t)`` of an observed event time.

    At a jump of a step curve the value is drawn uniformly between the left
    and right limits of ``F``; pass ``u`` to supply the uniform directly.

    Raises
    ------
    CensoredRealizationError
        If the realization is censored.
    """
    if not realized.event:
        raise CensoredRealizationError("PIT is undefined for a censored realization")
    t = realized.time
    Fr = 1.0 - float(curve.survival(t))
    Fl = 1.0 - float(curve.survival_left(t))
    if Fr <= Fl:
        return Fr
    if u is None:
        u = (rng if rng is not None else _default_rng()).random()
    return float(randomized_pit(Fl, Fr, u))


def pit_censored(curve, realized, u):
    """Uniform draw on ``[F(c), 1]`` for a realization censored at ``c``.

    Used by the simulation harness so that censored truths still enter the
    PIT histogram; :func:`pit` itself refuses censored input.
    """
    Fc = 1.0 - float(curve.survival(realized.time))
    return Fc + u * (1.0 - Fc)


def skill_score(ibs_method, ibs_reference):
    """``1 - ibs_method / ibs_reference``; positive when the method is better."""
    if not ibs_reference > 0:
        raise DomainError("reference score must be positive")
    return 1.0 - ibs_method / ibs_reference


def pit_histogram(values, bins=N_BINS):
    counts, _ = np.histogram(np.clip(values, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    return counts.astype(np.int64)


@dataclass(frozen=True)
class ScoreReport:
    """Aggregate scores of one forecast method.

    ``ibs`` is the mean per-realization IBS (a sum over days); ``mean_bs``
    divides it by the number of scored days.
    """

    ibs: float
    pit_values: np.ndarray = field(repr=False)
    pit_mean: float
    pit_sd: float
    histogram: np.ndarray
    n: int
    n_days: int
    n_excluded: int = 0

    @property
    def mean_bs(self):
        return self.ibs / self.n_days if self.n_days else math.nan

    @property
    def pit_mean_ref(self):
        return PIT_MEAN_REF

    @property
    def pit_sd_ref(self):
        return PIT_SD_REF


def score_report(ibs_values, pit_values, n_days, bins=N_BINS, n_excluded=0):
    ibs_values = np.asarray(ibs_values, dtype=np.float64)
    pv = np.asarray(pit_values, dtype=np.float64)
    return ScoreReport(
        ibs=float(np.mean(ibs_values)) if ibs_values.size else math.nan,
        pit_values=pv,
        pit_mean=float(np.mean(pv)) if pv.size else math.nan,
        pit_sd=float(np.std(pv, ddof=1)) if pv.size > 1 else math.nan,
        histogram=pit_histogram(pv, bins),
        n=int(ibs_values.size),
        n_days=int(n_days),
        n_excluded=int(n_excluded),
    )


REPORT_FIELDS = ("mean_ibs", "mean_bs", "pit_mean", "pit_sd", "n", "n_excluded")


def report_rows(unit_name, unit, reports):
    """One dict per method, ready for :func:`write_report_csv`."""
    rows = []
    for method, rep in reports.items():
        row = {unit_name: unit, "method": method, "mean_ibs": rep.ibs, "mean_bs": rep.mean_bs,
               "pit_mean": rep.pit_mean, "pit_sd": rep.pit_sd, "n": rep.n,
               "n_excluded": rep.n_excluded}
        for b, c in enumerate(rep.histogram):
            row[f"bin_{b}"] = int(c)
        rows.append(row)
    return rows


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(round(v, 12))
    return str(v)


def write_report_csv(path, rows):
    """Write report rows with a stable column order and float formatting."""
    if not rows:
        raise DomainError("no report rows to write")
    cols = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])
