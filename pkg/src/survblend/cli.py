"""Command-line entry point.

``survblend simulate`` runs the simulation study, ``survblend combine`` the
leave-one-year-out workflow on user data, ``survblend report`` tidies report
CSVs into long format with a calibration summary, and ``survblend verify``
checks a run directory against its manifest.

Exit codes: 0 success, 1 partial failure (skips are logged), 2 usage or
parse error.
"""
import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields

import numpy as np

from . import __version__, registry
from ._backend import BACKEND
from .evaluate import PIT_MEAN_REF, PIT_SD_REF, report_rows, write_report_csv
from .exceptions import SchemaError, SurvBlendError

log = logging.getLogger("survblend")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2
N_SCENARIOS = 16
CALIBRATION_TOL = 0.02
MANIFEST = "manifest.json"
DEFAULT_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)

_CONFIG_KEYS = {"seed", "scenarios", "methods", "method", "estimator", "threshold",
                "issue_offset", "t_max", "quantiles", "sources", "postprocess"}


class UsageError(Exception):
    """Bad command-line or configuration input (exit code 2)."""


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------

def parse_scenarios(text):
    """Scenario ids from ``"1..16"``, ``"1,3"`` or a mix such as ``"1..4,9"``."""
    ids = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                a, b = part.split("..", 1)
                lo, hi = int(a), int(b)
                if lo > hi:
                    raise ValueError
                ids.extend(range(lo, hi + 1))
            else:
                ids.append(int(part))
        except ValueError:
            raise UsageError(f"malformed scenario list {text!r}") from None
    if not ids:
        raise UsageError("no scenarios given")
    bad = [i for i in ids if not 1 <= i <= N_SCENARIOS]
    if bad:
        raise UsageError(f"scenario ids must lie in 1..{N_SCENARIOS}, got {bad}")
    return sorted(set(ids))


def parse_quantiles(text):
    try:
        qs = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"malformed quantile list {text!r}") from None
    if not qs or any(not 0.0 < q < 1.0 for q in qs):
        raise UsageError("quantile levels must lie strictly between 0 and 1")
    return tuple(sorted(set(qs)))


def parse_methods(text):
    names = []
    for n in str(text).split(","):
        n = n.strip()
        if not n:
            continue
        n = registry.CLI_METHODS.get(n, n)
        if n not in registry.BY_NAME:
            raise UsageError(f"unknown method {n!r}")
        names.append(n)
    if not names:
        raise UsageError("empty method list")
    return names


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment.

    ``scenario.<id>.<field>`` keys override scenario fields; ``<id>`` may be
    ``*`` for every scenario.
    """
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as err:
        raise UsageError(f"cannot read config {path}: {err.strerror}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (x.strip() for x in line.split("=", 1))
            if key not in _CONFIG_KEYS and not key.startswith("scenario."):
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = value
    return out


_SCENARIO_FIELDS = None


def scenario_overrides(config, scenario_id):
    """Typed ScenarioConfig overrides for one scenario from config keys."""
    global _SCENARIO_FIELDS
    from .simulate import ScenarioConfig
    if _SCENARIO_FIELDS is None:
        _SCENARIO_FIELDS = {f.name: f.type for f in fields(ScenarioConfig) if f.name != "id"}
    out = {}
    for key in sorted(config, key=lambda k: (k.split(".")[1:2] != ["*"], k)):
        if not key.startswith("scenario."):
            continue
        parts = key.split(".")
        if len(parts) != 3:
            raise UsageError(f"malformed scenario key {key!r}")
        _, sid, name = parts
        if sid != "*":
            try:
                sid = int(sid)
            except ValueError:
                raise UsageError(f"malformed scenario key {key!r}") from None
            if sid != scenario_id:
                continue
        if name not in _SCENARIO_FIELDS:
            raise UsageError(f"unknown scenario field {name!r}")
        typ = _SCENARIO_FIELDS[name]
        text = config[key]
        try:
            if typ in (bool, "bool"):
                val = text.lower() in ("1", "true", "yes")
            elif typ in (int, "int"):
                val = int(text)
            else:
                val = float(text)
        except ValueError:
            raise UsageError(f"bad value for {key}: {text!r}") from None
        out[name] = val
    return out


def _threads():
    text = os.environ.get("SURVBLEND_THREADS", "").strip()
    if not text:
        return 1
    try:
        n = int(text)
    except ValueError:
        raise UsageError(f"SURVBLEND_THREADS must be an integer, got {text!r}") from None
    return max(1, n)


def _map(func, jobs, workers):
    """Ordered results of ``func`` over ``jobs``, in worker processes when asked."""
    if workers <= 1 or len(jobs) <= 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(func, jobs))


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(out_dir, command, args, inputs, config_path, seed, outputs):
    """Record the run before any output is written; returns the manifest dict.

    A manifest left by an earlier run is compared first so that changed
    inputs are reported.
    """
    path = os.path.join(out_dir, MANIFEST)
    checks = {os.path.abspath(p): sha256_file(p) for p in inputs}
    if os.path.exists(path):
        try:
            with open(path, encoding="utf-8") as fh:
                old = json.load(fh)
            for p, digest in old.get("inputs", {}).items():
                if p in checks and checks[p] != digest:
                    log.warning("input %s changed since the previous run in %s", p, out_dir)
        except (OSError, ValueError):
            log.warning("unreadable manifest in %s is replaced", out_dir)
    manifest = {
        "command": command,
        "arguments": args,
        "config": os.path.abspath(config_path) if config_path else None,
        "seed": seed,
        "version": __version__,
        "backend": BACKEND,
        "output_dir": os.path.abspath(out_dir),
        "inputs": checks,
        "outputs": {name: None for name in outputs},
        "status": "running",
    }
    _dump(path, manifest)
    return manifest


def finish_manifest(out_dir, manifest, written, status):
    manifest["outputs"] = {name: sha256_file(os.path.join(out_dir, name)) for name in written}
    manifest["status"] = status
    _dump(os.path.join(out_dir, MANIFEST), manifest)


def verify_manifest(out_dir):
    """Mismatches between a run directory and its manifest (empty when intact)."""
    path = os.path.join(out_dir, MANIFEST)
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    problems = []
    for p, digest in manifest.get("inputs", {}).items():
        if not os.path.exists(p):
            problems.append(f"input missing: {p}")
        elif sha256_file(p) != digest:
            problems.append(f"input changed: {p}")
    for name, digest in manifest.get("outputs", {}).items():
        q = os.path.join(out_dir, name)
        if digest is None:
            problems.append(f"output never completed: {name}")
        elif not os.path.exists(q):
            problems.append(f"output missing: {name}")
        elif sha256_file(q) != digest:
            problems.append(f"output changed: {name}")
    return problems


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(round(v, 12))
    if v is None:
        return ""
    return str(v)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _simulate_job(job):
    sid, seed, overrides, methods = job
    from .simulate import run_scenario, scenario_config
    try:
        res = run_scenario(scenario_config(sid, **overrides), seed=seed, methods=methods)
    except Exception as err:  # reported per scenario; other scenarios go on
        return sid, None, f"{type(err).__name__}: {err}"
    rows = res.report_rows()
    return sid, rows, None


_REPORT_COLS = ("scenario", "method", "label", "mean_ibs", "mean_bs", "pit_mean", "pit_sd", "n",
                "n_excluded", "n_nonconverged")


def cmd_simulate(args):
    config = read_config(args.config) if args.config else {}
    scen_text = args.scenarios if args.scenarios is not None else config.get("scenarios", "1..16")
    scenarios = parse_scenarios(scen_text)
    seed = args.seed if args.seed is not None else int(config.get("seed", 1))
    if not 0 <= seed < 2 ** 64:
        raise UsageError("seed must be a nonnegative 64-bit integer")
    methods = parse_methods(args.methods or config.get("methods", ",".join(registry.METHOD_NAMES)))
    overrides = {s: scenario_overrides(config, s) for s in scenarios}
    workers = _threads()
    os.makedirs(args.out, exist_ok=True)
    planned = [f"scenario_{s:02d}_{kind}.csv" for s in scenarios for kind in ("report", "pit_hist")]
    manifest = write_manifest(args.out, "simulate", _argv(args), [args.config] if args.config else [],
                              args.config, seed, planned)
    results = _map(_simulate_job, [(s, seed, overrides[s], methods) for s in scenarios], workers)
    written, failed = [], []
    for sid, rows, err in results:
        if err is not None:
            log.error("scenario %d failed: %s", sid, err)
            failed.append(sid)
            continue
        rep = os.path.join(args.out, f"scenario_{sid:02d}_report.csv")
        _write_rows(rep, _REPORT_COLS,
                    [[r["scenario"], r["method"], registry.get(r["method"]).label] +
                     [r[c] for c in _REPORT_COLS[3:]] for r in rows])
        hist = os.path.join(args.out, f"scenario_{sid:02d}_pit_hist.csv")
        _write_rows(hist, ("scenario", "method", "bin", "lower", "upper", "count", "density"),
                    _hist_rows("scenario", rows))
        written += [os.path.basename(rep), os.path.basename(hist)]
        log.info("scenario %d done", sid)
    finish_manifest(args.out, manifest, written, "partial" if failed else "ok")
    return EXIT_PARTIAL if failed else EXIT_OK


def _hist_rows(unit_name, rows):
    out = []
    for r in rows:
        unit = r[unit_name]
        counts = [r[k] for k in sorted((k for k in r if k.startswith("bin_")),
                                       key=lambda k: int(k[4:]))]
        total = sum(counts)
        nb = len(counts)
        for b, c in enumerate(counts):
            dens = c * nb / total if total else math.nan
            out.append([unit, r["method"], b, b / nb, (b + 1) / nb, c, dens])
    return out


def _argv(args):
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


# ---------------------------------------------------------------------------
# combine
# ---------------------------------------------------------------------------

def _detect_kind(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err.strerror}") from None
    except UnicodeDecodeError:
        raise SchemaError("file is not UTF-8 text", path, 1) from None
    cols = {h.strip() for h in header or ()}
    if "temp" in cols and "day" in cols:
        return "trajectories"
    if "event_flag" in cols and "time" in cols:
        return "events"
    raise SchemaError("missing header row: expected trajectory or event-time columns", path, 1)


def _combine_job(job):
    from .pipeline import leave_one_year_out, training_pairs
    data, method, estimator, t_max, issue_offset, quantiles = job
    try:
        pairs = training_pairs(data, issue_offset)
        res = leave_one_year_out(pairs, method, estimator, t_max, issue_offset,
                                 quantiles=quantiles)
    except SurvBlendError as err:
        return data.location_id, None, f"{type(err).__name__}: {err}"
    return data.location_id, res, None


def cmd_combine(args):
    from . import pipeline as pl
    if not args.data:
        raise UsageError("no input files given")
    config = read_config(args.config) if args.config else {}

    def pick(flag, key, conv, default):
        if flag is not None:
            return flag
        if key in config:
            try:
                return conv(config[key])
            except ValueError:
                raise UsageError(f"bad value for {key}: {config[key]!r}") from None
        return default

    method = pick(args.method, "method", str, "lp")
    method = registry.CLI_METHODS.get(method, method)
    if method not in registry.CLI_METHODS.values():
        raise UsageError(f"unknown method {method!r}")
    estimator = pick(args.estimator, "estimator", str, None)
    t_max = pick(args.tmax, "t_max", int, pl.T_MAX)
    threshold = pick(args.threshold, "threshold", float, pl.THRESHOLD)
    issue_offset = pick(args.issue_offset, "issue_offset", int, pl.ISSUE_OFFSET)
    quantiles = parse_quantiles(args.quantiles) if args.quantiles else \
        (parse_quantiles(config["quantiles"]) if "quantiles" in config else DEFAULT_QUANTILES)
    sources = tuple(s.strip() for s in config["sources"].split(",")) if "sources" in config else None
    post = config.get("postprocess", "true").lower() in ("1", "true", "yes")
    try:
        spec, estimator = pl._resolve_method(method, estimator)
    except SurvBlendError as err:
        raise UsageError(str(err)) from None
    if t_max <= issue_offset:
        raise UsageError("t_max must exceed issue_offset")

    locations = {}
    for path in args.data:
        kind = _detect_kind(path)
        if kind == "trajectories":
            found = pl.locations_from_trajectories(pl.read_trajectories(path), threshold, sources,
                                                   apply_postprocessing=post)
        else:
            found = pl.locations_from_events(pl.read_event_times(path), sources)
        for loc, d in found.items():
            if loc in locations:
                raise UsageError(f"location {loc!r} appears in more than one input")
            locations[loc] = d
    if not locations:
        raise UsageError("inputs contain no locations")

    os.makedirs(args.out, exist_ok=True)
    names = ["combine_parameters.csv", "combine_scores.csv", "combine_quantiles.csv",
             "combine_report.csv", "combine_pit_hist.csv", "combine_summary.csv"]
    manifest = write_manifest(args.out, "combine", _argv(args),
                              list(args.data) + ([args.config] if args.config else []),
                              args.config, None, names)
    jobs = [(locations[k], method, estimator, t_max, issue_offset, quantiles)
            for k in sorted(locations)]
    results = _map(_combine_job, jobs, _threads())

    prm, scores, qrows, report, failed = [], [], [], [], []
    per_method = {}
    for loc, res, err in results:
        if err is not None:
            log.error("location %s skipped: %s", loc, err)
            failed.append(loc)
            continue
        for f in res.folds:
            p = f.params
            pd = p.as_dict() if p is not None else {}
            prm.append([loc, f.year, res.method, res.estimator] +
                       [pd.get(k) for k in ("omega", "alpha", "beta", "mu", "sigma", "df")] +
                       [int(f.zeroed), f.errors.get(res.method, "")])
            for n in res.names:
                scores.append([loc, f.year, n, f.ibs[n], f.pit[n], int(f.zeroed),
                               f.errors.get(n, "")])
            for q in quantiles:
                qrows.append([loc, f.year, res.method, q, f.quantiles.get(q, math.nan)])
            for n, e in f.errors.items():
                log.warning("location %s year %s %s: %s", loc, f.year, n, e)
        reps = res.reports()
        report += report_rows("location", loc, reps)
        for n, r in reps.items():
            per_method.setdefault(n, []).append(r.ibs)

    out = args.out
    _write_rows(os.path.join(out, names[0]),
                ("location", "year", "method", "estimator", "omega", "alpha", "beta", "mu",
                 "sigma", "df", "zeroed", "error"), prm)
    _write_rows(os.path.join(out, names[1]),
                ("location", "year", "method", "ibs", "pit", "zeroed", "error"), scores)
    _write_rows(os.path.join(out, names[2]), ("location", "year", "method", "level", "day"), qrows)
    written = names[:3]
    if report:
        write_report_csv(os.path.join(out, names[3]), report)
        _write_rows(os.path.join(out, names[4]),
                    ("location", "method", "bin", "lower", "upper", "count", "density"),
                    _hist_rows("location", report))
        summary = [[n, float(np.nanmean(v)), int(np.sum(~np.isnan(v)))]
                   for n, v in ((n, np.array(v)) for n, v in per_method.items())]
        _write_rows(os.path.join(out, names[5]), ("method", "mean_ibs", "n_locations"), summary)
        written = names
    finish_manifest(out, manifest, written, "partial" if failed else "ok")
    if not report:
        log.error("every location failed")
    return EXIT_PARTIAL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

_METRICS = ("mean_ibs", "mean_bs", "pit_mean", "pit_sd", "n", "n_excluded")


def _read_report(path):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        unit = "scenario" if "scenario" in cols else ("location" if "location" in cols else None)
        need = {"method", "mean_ibs", "pit_mean", "pit_sd"}
        if unit is None or not need <= set(cols):
            raise SchemaError(f"not a report file; expected columns scenario|location, "
                              f"{sorted(need)}", path, 1)
        rows = []
        for line, r in enumerate(reader, start=2):
            if None in r or any(v is None for v in r.values()):
                raise SchemaError("wrong number of fields", path, line)
            rows.append((unit, r))
    return rows


def calibration_flags(pit_mean, pit_sd, tol=CALIBRATION_TOL):
    """Labels for a PIT mean/sd pair outside ``tol`` of the uniform values."""
    flags = []
    if abs(pit_mean - PIT_MEAN_REF) > tol:
        flags.append("underestimates" if pit_mean > PIT_MEAN_REF else "overestimates")
    if abs(pit_sd - PIT_SD_REF) > tol:
        flags.append("overdispersive" if pit_sd < PIT_SD_REF else "underdispersive")
    return flags


def cmd_report(args):
    if not args.reports:
        raise UsageError("no report files given")
    rows = []
    for path in args.reports:
        rows += _read_report(path)
    long_rows, lines = [], []
    for unit, r in rows:
        for m in _METRICS:
            if m in r and r[m] != "":
                long_rows.append([unit, r[unit], r["method"], m, r[m]])
        try:
            pm, ps = float(r["pit_mean"]), float(r["pit_sd"])
        except ValueError:
            raise UsageError(f"non-numeric PIT summary for {r[unit]}/{r['method']}") from None
        if math.isnan(pm) or math.isnan(ps):
            continue
        flags = calibration_flags(pm, ps)
        status = ", ".join(flags) if flags else "calibrated"
        lines.append(f"{unit} {r[unit]:>4} {r['method']:<12} pit_mean={pm:.3f} "
                     f"pit_sd={ps:.3f}  {status}")
    os.makedirs(args.out, exist_ok=True)
    names = ["report_long.csv", "calibration_summary.txt"]
    manifest = write_manifest(args.out, "report", _argv(args), list(args.reports), None, None, names)
    _write_rows(os.path.join(args.out, names[0]), ("unit_type", "unit", "method", "metric", "value"),
                long_rows)
    text = "\n".join(lines) + "\n"
    with open(os.path.join(args.out, names[1]), "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    finish_manifest(args.out, manifest, names, "ok")
    return EXIT_OK


def cmd_verify(args):
    try:
        problems = verify_manifest(args.out)
    except (OSError, ValueError) as err:
        raise UsageError(f"cannot read manifest in {args.out}: {err}") from None
    for p in problems:
        print(p)
    if not problems:
        print("ok")
    return EXIT_PARTIAL if problems else EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="survblend", description="Combine censored ensemble time-to-event forecasts.")
    p.add_argument("--version", action="version", version=f"survblend {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run the simulation study")
    s.add_argument("--scenarios", help='scenario ids, e.g. "1..16" or "1,3" (default all)')
    s.add_argument("--seed", type=int, help="master seed (default 1)")
    s.add_argument("--config", help="flat key = value config file")
    s.add_argument("--methods", help="comma-separated method names (default all 17)")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("combine", help="leave-one-year-out combination of user data")
    c.add_argument("data", nargs="*", help="trajectory or event-time CSV files")
    c.add_argument("--method", choices=sorted(registry.CLI_METHODS), help="combination method")
    c.add_argument("--estimator", choices=("ml", "minibs"), help="parameter estimator")
    c.add_argument("--config", help="flat key = value config file")
    c.add_argument("--tmax", type=int, help="last scored day (default 120)")
    c.add_argument("--threshold", type=float, help="event threshold in deg C (default 0)")
    c.add_argument("--issue-offset", dest="issue_offset", type=int,
                   help="issue day of the combined forecast (default 30)")
    c.add_argument("--quantiles", help="comma-separated quantile levels")
    c.add_argument("--out", required=True, help="output directory")
    c.set_defaults(func=cmd_combine)

    r = sub.add_parser("report", help="long-format tidy-up and calibration summary")
    r.add_argument("reports", nargs="*", help="report CSVs from simulate or combine")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("verify", help="check a run directory against its manifest")
    v.add_argument("out", help="run directory")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(f"survblend: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, SchemaError) as err:
        print(f"survblend: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
