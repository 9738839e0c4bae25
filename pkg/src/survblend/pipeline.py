"""Real-data workflow: ingestion, post-processing, event extraction and
leave-one-year-out combination.

All times live on one clock whose origin is the issue date of the earliest
forecast: day 1 is the first forecast day. A forecast issued ``issue_day``
days later has its first value on day ``issue_day + 1``.
"""
import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import registry
from .combine import CombinedCurve, hb_combine, merge_combine
from .estimate import TrainingPair, TrainingSet, layout, minibs_estimate, ml_estimate
from .evaluate import day_grid, ibs, pit, pit_censored, score_report
from .exceptions import (DegenerateFitError, DomainError, EmptyEnsembleError,
                         InsufficientHistoryError, MissingStatsError, SchemaError, SurvBlendError)
from .survcurve import CensoredTime, Ensemble, km_estimate, lognormal_ml_fit

THRESHOLD = 0.0
ISSUE_OFFSET = 30
T_MAX = 120
OBS_SOURCE = "obs"
MIN_LOO_YEARS = 5
MIN_FOLD_YEARS = 3

TRAJECTORY_COLUMNS = ("source_id", "location_id", "year", "member", "day", "temp")
EVENT_COLUMNS = ("source_id", "location_id", "year", "member", "time", "event_flag")

REFERENCE_METHODS = ("source1", "source2", "source1_km", "source2_km", "climatology")

_PIT_KEY = 0x10F0


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Daily mean temperatures of one ensemble member (or the observations).

    ``values[i]`` belongs to day ``issue_day + i + 1`` of the common clock.
    """

    source_id: str
    year: int
    location_id: str
    values: np.ndarray = field(repr=False)
    issue_day: int = 0
    max_lead: int = None
    member: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise DomainError("a trajectory needs a nonempty 1-d value array")
        if not np.all(np.isfinite(v)):
            raise DomainError("trajectory values must be finite")
        lead = v.size if self.max_lead is None else int(self.max_lead)
        if lead != v.size:
            raise DomainError(f"max_lead {lead} does not match {v.size} values")
        if int(self.issue_day) < 0:
            raise DomainError("issue_day must be nonnegative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "max_lead", lead)
        object.__setattr__(self, "issue_day", int(self.issue_day))

    @property
    def days(self):
        return np.arange(self.issue_day + 1, self.issue_day + self.max_lead + 1)

    @property
    def horizon(self):
        """Last day covered, which is the censoring time of the member."""
        return self.issue_day + self.max_lead

    def with_values(self, values):
        return replace(self, values=values)


@dataclass(frozen=True)
class ClimatologyStats:
    """Day-wise historical means and standard deviations.

    ``obs_mean[loc][d - 1]`` is the observed mean on day ``d``;
    ``fc_mean[(source, loc)]`` likewise for a forecast source over all its
    members. Days without data hold NaN.
    """

    obs_mean: dict
    obs_sd: dict
    fc_mean: dict
    fc_sd: dict
    left_out: object = None
    leave_one_out: bool = False

    def swapped(self, source_id, location_id):
        """Stats with the forecast and observation roles of one pair exchanged."""
        key = (source_id, location_id)
        return ClimatologyStats(
            obs_mean={location_id: self.fc_mean[key]}, obs_sd={location_id: self.fc_sd[key]},
            fc_mean={key: self.obs_mean[location_id]}, fc_sd={key: self.obs_sd[location_id]},
            left_out=self.left_out, leave_one_out=self.leave_one_out)


def _lookup(table, key, days, what):
    try:
        arr = table[key]
    except KeyError:
        raise MissingStatsError(f"no {what} statistics for {key!r}") from None
    if days[-1] > arr.size:
        raise MissingStatsError(f"{what} statistics for {key!r} end on day {arr.size}")
    out = arr[days - 1]
    if np.any(np.isnan(out)):
        raise MissingStatsError(f"{what} statistics for {key!r} miss some days")
    return out


def postprocess(traj, stats):
    """Standardize against the forecast climatology, then map onto the observed one.

    ``f_hat = (f - mu_fc) / sd_fc * sd_obs + mu_obs``, day by day.

    Raises
    ------
    MissingStatsError
        If a day of ``traj`` is not covered.
    DomainError
        If a standard deviation is zero.
    """
    days = traj.days
    mf = _lookup(stats.fc_mean, (traj.source_id, traj.location_id), days, "forecast")
    sf = _lookup(stats.fc_sd, (traj.source_id, traj.location_id), days, "forecast")
    mo = _lookup(stats.obs_mean, traj.location_id, days, "observed")
    so = _lookup(stats.obs_sd, traj.location_id, days, "observed")
    if np.any(sf <= 0.0) or np.any(so <= 0.0):
        raise DomainError("climatological standard deviation is zero")
    return traj.with_values((traj.values - mf) / sf * so + mo)


def _day_moments(trajs, n_days):
    mat = np.full((len(trajs), n_days), np.nan)
    for i, tr in enumerate(trajs):
        mat[i, tr.issue_day:tr.horizon] = tr.values
    n = np.sum(~np.isnan(mat), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.nansum(mat, axis=0) / n
        ss = np.nansum((mat - mean) ** 2, axis=0)
        sd = np.sqrt(ss / (n - 1))
    mean[n == 0] = np.nan
    sd[n < 2] = np.nan
    return mean, sd


def compute_climatology(trajectories, leave_out=None, min_years=MIN_LOO_YEARS):
    """Day-wise climatology of observations and forecasts.

    With ``leave_out`` set and at least ``min_years`` distinct years, that
    year is excluded. With fewer years the full sample is used and a warning
    is issued.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise InsufficientHistoryError("no trajectories to compute a climatology from")
    years = {t.year for t in trajectories}
    loo = leave_out is not None and len(years) >= min_years
    if leave_out is not None and not loo:
        warnings.warn(f"only {len(years)} years available; climatology uses the full sample "
                      f"including year {leave_out!r}", RuntimeWarning, stacklevel=2)
    n_days = max(t.horizon for t in trajectories)
    groups = {}
    for t in trajectories:
        if loo and t.year == leave_out:
            continue
        key = t.location_id if t.source_id == OBS_SOURCE else (t.source_id, t.location_id)
        groups.setdefault(key, []).append(t)
    obs_mean, obs_sd, fc_mean, fc_sd = {}, {}, {}, {}
    for key, trs in groups.items():
        m, s = _day_moments(trs, n_days)
        if isinstance(key, tuple):
            fc_mean[key], fc_sd[key] = m, s
        else:
            obs_mean[key], obs_sd[key] = m, s
    return ClimatologyStats(obs_mean, obs_sd, fc_mean, fc_sd,
                            left_out=leave_out if loo else None, leave_one_out=loo)


def extract_event_time(traj, threshold=THRESHOLD):
    """First day with a value below ``threshold``; censored at the horizon otherwise."""
    if not math.isfinite(threshold):
        raise DomainError("threshold must be finite")
    below = np.flatnonzero(traj.values < threshold)
    if below.size:
        return CensoredTime(traj.issue_day + below[0] + 1, True)
    return CensoredTime(traj.horizon, False)


def condition_on_issue_date(ens, issue_offset):
    """Drop members whose event happened on or before ``issue_offset``.

    Remaining times keep the original clock.

    Raises
    ------
    EmptyEnsembleError
        If every member is dropped.
    """
    if issue_offset < 0:
        raise DomainError("issue_offset must be nonnegative")
    kept = tuple(m for m in ens.members if not (m.event and m.time <= issue_offset))
    if not kept:
        raise EmptyEnsembleError(f"every member of {ens.source_id or 'the ensemble'} "
                                 f"has its event by day {issue_offset}")
    if len(kept) == len(ens.members):
        return ens
    return Ensemble(kept, ens.max_lead_time, ens.source_id)


def _history_items(history):
    if isinstance(history, dict):
        return list(history.items())
    return [(y, r) for y, r in history]


def climatology_forecast(history, leave_out=None, issue_offset=0):
    """Kaplan-Meier curve of historical realized times.

    Parameters
    ----------
    history : dict or iterable of (year, CensoredTime)
    leave_out : year, optional
        Target year to exclude.
    issue_offset : int
        Years whose event happened on or before this day are excluded too.

    Raises
    ------
    InsufficientHistoryError
        With fewer than two usable years.
    """
    kept = [r for y, r in _history_items(history)
            if y != leave_out and not (r.event and r.time <= issue_offset)]
    if len(kept) < 2:
        raise InsufficientHistoryError(f"need at least two usable history years, got {len(kept)}")
    return km_estimate((np.array([r.time for r in kept]), np.array([r.event for r in kept])))


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _open_rows(path, columns):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        fh.close()
        raise SchemaError("file is empty, a header row is required", path, 1)
    header = [h.strip() for h in header]
    missing = [c for c in columns if c not in header]
    if missing:
        fh.close()
        raise SchemaError(f"missing header row or columns {missing}; expected {list(columns)}",
                          path, 1)
    idx = [header.index(c) for c in columns]
    return fh, reader, idx, len(header)


def _rows(path, columns):
    fh, reader, idx, width = _open_rows(path, columns)
    with fh:
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise SchemaError(f"expected {width} fields, got {len(row)}", path, line)
            yield line, [row[i].strip() for i in idx]


def _int(text, name, path, line):
    try:
        return int(text)
    except ValueError:
        raise SchemaError(f"{name} must be an integer, got {text!r}", path, line) from None


def _float(text, name, path, line):
    try:
        v = float(text)
    except ValueError:
        raise SchemaError(f"{name} must be a number, got {text!r}", path, line) from None
    if not math.isfinite(v):
        raise SchemaError(f"{name} must be finite", path, line)
    return v


def read_trajectories(path):
    """Trajectories from a CSV with columns ``source_id, location_id, year, member, day, temp``.

    ``day`` is the day on the common clock; each member's days must be
    consecutive.
    """
    groups = {}
    for line, (src, loc, year, member, day, temp) in _rows(path, TRAJECTORY_COLUMNS):
        key = (src, loc, _int(year, "year", path, line), _int(member, "member", path, line))
        d = _int(day, "day", path, line)
        if d < 1:
            raise SchemaError("day must be at least 1", path, line)
        groups.setdefault(key, []).append((d, _float(temp, "temp", path, line), line))
    out = []
    for (src, loc, year, member), rows in groups.items():
        rows.sort()
        days = np.array([r[0] for r in rows])
        gaps = np.flatnonzero(np.diff(days) != 1)
        if gaps.size:
            bad = rows[gaps[0] + 1]
            raise SchemaError(f"days of {src}/{loc}/{year}/member {member} are not consecutive "
                              f"(day {bad[0]})", path, bad[2])
        out.append(Trajectory(src, year, loc, [r[1] for r in rows], issue_day=int(days[0]) - 1,
                              member=member))
    return out


_FLAGS = {"1": True, "0": False, "true": True, "false": False}


def read_event_times(path):
    """Event-time rows ``(source_id, location_id, year, member, CensoredTime)`` from CSV."""
    out = []
    for line, (src, loc, year, member, time, flag) in _rows(path, EVENT_COLUMNS):
        t = _float(time, "time", path, line)
        if t <= 0:
            raise SchemaError("time must be positive", path, line)
        try:
            ev = _FLAGS[flag.lower()]
        except KeyError:
            raise SchemaError(f"event_flag must be 0 or 1, got {flag!r}", path, line) from None
        out.append((src, loc, _int(year, "year", path, line), _int(member, "member", path, line),
                    CensoredTime(t, ev)))
    return out


def write_trajectories(path, trajectories):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for t in trajectories:
            for d, v in zip(t.days, t.values):
                w.writerow([t.source_id, t.location_id, t.year, t.member, int(d), repr(round(float(v), 6))])


def write_event_times(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for src, loc, year, member, r in rows:
            w.writerow([src, loc, year, member, repr(r.time), int(r.event)])


# ---------------------------------------------------------------------------
# per-location data
# ---------------------------------------------------------------------------

@dataclass
class LocationData:
    """Per-year ensembles (source order fixed) and realized times of one location."""

    location_id: str
    sources: tuple
    ensembles: dict          # year -> tuple of Ensemble
    realized: dict           # year -> CensoredTime

    @property
    def years(self):
        return sorted(set(self.ensembles) & set(self.realized))


def _source_order(found, sources):
    found = sorted(found - {OBS_SOURCE})
    if sources is None:
        sources = found
    sources = tuple(sources)
    if len(sources) != 2:
        raise SchemaError(f"need exactly two forecast sources, found {found}")
    for s in sources:
        if s not in found:
            raise SchemaError(f"source {s!r} not present in the input")
    return sources


def _ensemble(members, source_id):
    lead = max(m.time for m in members if not m.event) if any(not m.event for m in members) \
        else max(m.time for m in members)
    return Ensemble(tuple(members), lead, source_id)


def locations_from_events(rows, sources=None):
    """Group event-time rows into :class:`LocationData` keyed by location."""
    srcs = _source_order({r[0] for r in rows}, sources)
    members, obs = {}, {}
    for src, loc, year, _member, r in rows:
        if src == OBS_SOURCE:
            if (loc, year) in obs:
                raise SchemaError(f"more than one observation for {loc}/{year}")
            obs[(loc, year)] = r
        elif src in srcs:
            members.setdefault((loc, year, src), []).append(r)
    out = {}
    for loc, year in sorted({(k[0], k[1]) for k in members}):
        data = out.setdefault(loc, LocationData(loc, srcs, {}, {}))
        if all((loc, year, s) in members for s in srcs) and (loc, year) in obs:
            data.ensembles[year] = tuple(_ensemble(members[(loc, year, s)], s) for s in srcs)
            data.realized[year] = obs[(loc, year)]
    return out


def locations_from_trajectories(trajectories, threshold=THRESHOLD, sources=None,
                                apply_postprocessing=True, min_years=MIN_LOO_YEARS):
    """Extract per-year ensembles and realized times from temperature trajectories.

    Forecast trajectories are post-processed with a climatology that leaves
    the target year out; observations are used as they are.
    """
    trajectories = list(trajectories)
    srcs = _source_order({t.source_id for t in trajectories}, sources)
    by_loc = {}
    for t in trajectories:
        by_loc.setdefault(t.location_id, []).append(t)
    out = {}
    for loc in sorted(by_loc):
        trs = [t for t in by_loc[loc] if t.source_id == OBS_SOURCE or t.source_id in srcs]
        data = LocationData(loc, srcs, {}, {})
        years = sorted({t.year for t in trs})
        for year in years:
            here = [t for t in trs if t.year == year]
            obs = [t for t in here if t.source_id == OBS_SOURCE]
            if len(obs) != 1:
                continue
            if apply_postprocessing:
                with warnings.catch_warnings():
                    if len(years) < min_years:
                        warnings.simplefilter("ignore", RuntimeWarning)
                    stats = compute_climatology(trs, leave_out=year, min_years=min_years)
            ens = []
            for s in srcs:
                fc = [t for t in here if t.source_id == s]
                if not fc:
                    break
                if apply_postprocessing:
                    fc = [postprocess(t, stats) for t in fc]
                ens.append(Ensemble(tuple(extract_event_time(t, threshold) for t in fc),
                                    max(t.horizon for t in fc), s))
            if len(ens) != 2:
                continue
            data.ensembles[year] = tuple(ens)
            data.realized[year] = extract_event_time(obs[0], threshold)
        if len(years) < min_years and apply_postprocessing:
            warnings.warn(f"location {loc}: fewer than {min_years} years, climatology uses the "
                          "full sample", RuntimeWarning, stacklevel=2)
        out[loc] = data
    return out


def training_pairs(data, issue_offset=ISSUE_OFFSET):
    """Condition each year's ensembles on the issue date and fit log-normal curves.

    Years whose ensembles cannot be conditioned or fitted keep
    ``fitted=None``; ensembles that lose every member are left unconditioned
    in that case and the year is marked unusable for parametric methods.
    """
    pairs = []
    for year in data.years:
        ens = data.ensembles[year]
        try:
            ens = tuple(condition_on_issue_date(e, issue_offset) for e in ens)
            fitted = tuple(lognormal_ml_fit(e) for e in ens)
        except SurvBlendError:
            fitted = None
        pairs.append(TrainingPair(year, ens, data.realized[year], fitted))
    return pairs


# ---------------------------------------------------------------------------
# leave-one-year-out
# ---------------------------------------------------------------------------

@dataclass
class FoldResult:
    """Scores of one held-out year.

    ``zeroed`` marks years whose event came on or before the issue day; all
    their IBS values are 0 and no PIT is recorded.
    """

    year: object
    params: object
    ibs: dict
    pit: dict
    zeroed: bool = False
    errors: dict = field(default_factory=dict)
    quantiles: dict = field(default_factory=dict)


@dataclass
class LoyoResult:
    method: str
    estimator: str
    names: tuple
    folds: list
    n_days: int = 0

    def reports(self):
        """Per-method :class:`~survblend.evaluate.ScoreReport` over the folds."""
        out = {}
        for n in self.names:
            iv = np.array([f.ibs[n] for f in self.folds])
            pv = np.array([f.pit[n] for f in self.folds if not f.zeroed])
            ok = ~np.isnan(iv)
            out[n] = score_report(iv[ok], pv[~np.isnan(pv)], self.n_days,
                                  n_excluded=int((~ok).sum()))
        return out


def _resolve_method(method, estimator):
    spec = registry.get(registry.CLI_METHODS.get(method, method))
    if spec.template is None:
        raise DomainError(f"{method} is not a combination method")
    est = estimator if estimator is not None else (spec.estimator or "ml")
    if est not in ("ml", "minibs"):
        raise DomainError(f"unknown estimator {est!r}")
    if spec.template.method not in ("LP0", "MERGE"):
        layout(spec.template, est)
    return spec, est


def _needs_fit(spec):
    return spec.source_fit == "ml"


def _fold_params(spec, est, train, t_max, t_min):
    tmpl = spec.template
    if tmpl.method == "MERGE":
        return None
    if est == "ml":
        return ml_estimate(tmpl, TrainingSet(train))
    return minibs_estimate(tmpl, TrainingSet(train), t_max, t_min)


def _method_curve(spec, params, pair):
    m = spec.template.method
    if m == "HB":
        return hb_combine(pair.ensembles[0], pair.ensembles[1], params.omega)
    if m == "MERGE":
        return merge_combine(pair.ensembles[0], pair.ensembles[1])
    if pair.fitted is None:
        raise DegenerateFitError("no source fits for this year")
    return CombinedCurve(params, list(pair.fitted))


def _reference_curve(name, pair, history, issue_offset):
    if name == "climatology":
        return climatology_forecast(history, leave_out=pair.year_id, issue_offset=issue_offset)
    k = 0 if name.startswith("source1") else 1
    if name.endswith("_km"):
        return km_estimate(pair.ensembles[k])
    if pair.fitted is None:
        raise DegenerateFitError("no source fit for this year")
    return pair.fitted[k]


def leave_one_year_out(pairs, method, estimator=None, t_max=T_MAX, issue_offset=ISSUE_OFFSET,
                       references=REFERENCE_METHODS, quantiles=()):
    """Estimate on all other years, then score the held-out year, for every year.

    Parameters
    ----------
    pairs : list of TrainingPair
        One entry per year, see :func:`training_pairs`.
    method : str
        Registry or CLI method name.
    estimator : {"ml", "minibs"}, optional
        Defaults to the method's registry estimator.
    t_max : int
        Last scored day; scoring starts the day after ``issue_offset``.
    references : sequence of str
        Reference forecasts scored alongside.
    quantiles : sequence of float
        Levels at which the combined curve's quantiles are stored per fold
        (searched on ``(0, t_max]``).

    Years whose event came on or before ``issue_offset`` get IBS 0 for every
    method and are left out of every training set.
    """
    pairs = list(pairs)
    if len(pairs) < MIN_FOLD_YEARS:
        raise InsufficientHistoryError(f"need at least {MIN_FOLD_YEARS} years, got {len(pairs)}")
    spec, est = _resolve_method(method, estimator)
    names = (spec.name,) + tuple(references)
    days = day_grid(t_max, issue_offset)
    history = [(p.year_id, p.realized) for p in pairs]

    def early(p):
        return p.realized.event and p.realized.time <= issue_offset

    folds = []
    for i, p in enumerate(pairs):
        if early(p):
            folds.append(FoldResult(p.year_id, None, {n: 0.0 for n in names},
                                    {n: math.nan for n in names}, zeroed=True))
            continue
        u = np.random.Generator(np.random.Philox(key=_PIT_KEY + i)).random()
        fold = FoldResult(p.year_id, None, {n: math.nan for n in names},
                          {n: math.nan for n in names})
        train = [q for q in pairs if q is not p and not early(q)
                 and (q.fitted is not None or not _needs_fit(spec))]
        try:
            fold.params = _fold_params(spec, est, train, t_max, issue_offset)
        except SurvBlendError as err:
            fold.errors[spec.name] = f"{type(err).__name__}: {err}"
        for n in names:
            if n == spec.name and spec.name in fold.errors:
                continue
            try:
                curve = (_method_curve(spec, fold.params, p) if n == spec.name
                         else _reference_curve(n, p, history, issue_offset))
            except SurvBlendError as err:
                fold.errors[n] = f"{type(err).__name__}: {err}"
                continue
            if n == spec.name:
                fold.quantiles = {q: curve_quantile(curve, q, t_max) for q in quantiles}
            fold.ibs[n] = ibs(curve, p.realized, days[-1], issue_offset)
            fold.pit[n] = (pit(curve, p.realized, u=u) if p.realized.event
                           else pit_censored(curve, p.realized, u))
        folds.append(fold)
    return LoyoResult(spec.name, est, names, folds, n_days=days.size)


# ---------------------------------------------------------------------------
# quantiles
# ---------------------------------------------------------------------------

def curve_quantile(curve, q, upper, tol=1e-9):
    """Smallest ``t`` in ``(0, upper]`` with ``F(t) >= q``; NaN if the mass by ``upper`` is short."""
    if not 0.0 < q < 1.0:
        raise DomainError("quantile level must lie in (0, 1)")
    if 1.0 - float(curve.survival(upper)) < q:
        return math.nan
    lo, hi = 0.0, float(upper)
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if 1.0 - float(curve.survival(mid)) >= q:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# synthetic case study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings for a synthetic two-source case study.

    Latent event times follow the simulation model (shared components ``x1``
    and ``x2``); each trajectory is a linear cooling ramp that crosses zero
    at its latent time. Raw forecasts get a slope and offset error that
    post-processing removes.
    """

    n_locations: int = 20
    n_years: int = 20
    n1: int = 25
    n2: int = 11
    xi0: float = math.log(70.0)
    tau0: float = 0.25
    tau1: float = 0.25
    tau2: float = 0.25
    issue2: int = 30
    lead1: int = 122
    lead2: int = 46
    obs_lead: int = 122
    obs_slope: float = 0.3
    slopes: tuple = (0.25, 0.4)
    offsets: tuple = (1.5, -1.0)
    sources: tuple = ("seasonal", "subseasonal")


def synthetic_trajectories(seed=1, config=None):
    """Trajectories for ``config.n_locations`` locations and ``config.n_years`` years."""
    c = config or SyntheticConfig()
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    out = []
    s1 = math.sqrt(c.tau0 ** 2 + c.tau2 ** 2)
    s2 = math.sqrt(c.tau0 ** 2 + c.tau1 ** 2)
    for li in range(c.n_locations):
        loc = f"loc{li:03d}"
        # location climate: median event day shifts between locations
        xi = c.xi0 + 0.15 * rng.standard_normal()
        for yi in range(c.n_years):
            year = 2000 + yi
            x1 = c.tau1 * rng.standard_normal()
            x2 = c.tau2 * rng.standard_normal()
            truth = math.exp(xi + x1 + x2 + c.tau0 * rng.standard_normal())
            d = np.arange(1, c.obs_lead + 1)
            out.append(Trajectory(OBS_SOURCE, year, loc, c.obs_slope * (truth - d)))
            lat1 = np.exp(xi + x1 + s1 * rng.standard_normal(c.n1))
            lat2 = np.exp(xi + x2 + s2 * rng.standard_normal(c.n2))
            for (src, lat, issue, lead, slope, off) in (
                    (c.sources[0], lat1, 0, c.lead1, c.slopes[0], c.offsets[0]),
                    (c.sources[1], lat2, c.issue2, c.lead2, c.slopes[1], c.offsets[1])):
                d = np.arange(issue + 1, issue + lead + 1)
                for m, t in enumerate(lat):
                    out.append(Trajectory(src, year, loc, slope * (t - d) + off,
                                          issue_day=issue, member=m))
    return out


__all__ = [
    "ClimatologyStats", "FoldResult", "LocationData", "LoyoResult", "SyntheticConfig",
    "Trajectory", "climatology_forecast", "compute_climatology", "condition_on_issue_date",
    "curve_quantile", "extract_event_time", "leave_one_year_out", "locations_from_events",
    "locations_from_trajectories", "postprocess", "read_event_times", "read_trajectories",
    "synthetic_trajectories", "training_pairs", "write_event_times", "write_trajectories",
]
