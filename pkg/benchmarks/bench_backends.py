"""Compare the compiled kernels with the pure-Python fallback.

Usage::

    python benchmarks/bench_backends.py            # full sizes
    python benchmarks/bench_backends.py --quick    # smaller inputs
    python benchmarks/bench_backends.py --json out.json

Each case runs the same call on both backends, checks that the results
agree, and reports the best of ``--repeat`` wall-clock timings.
"""
import argparse
import json
import sys
import time

import numpy as np

from survblend._backend import get_kernels


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _max_diff(a, b):
    if isinstance(a, tuple) and len(a) == 5:
        # optimizer result: compare the minimizer and the objective, not the
        # iteration counts (rounding differences change the simplex path)
        a, b = a[:2], b[:2]
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        return float("inf")
    d = np.abs(a - b)
    d = d[~(np.isnan(a) & np.isnan(b))]
    return float(d.max()) if d.size else 0.0


def cases(scale):
    rng = np.random.default_rng(20240601)
    n = int(200_000 * scale)
    p = rng.random(n)
    x = rng.normal(size=n)
    u = rng.random(n // 4)

    m, k = int(400 * scale) or 1, 100
    T = np.exp(3.8 + 0.5 * rng.normal(size=(m, k)))
    E = T <= 120.0
    T = np.where(E, T, 120.0)

    nt = int(1000 * scale) or 10
    F1, F2 = rng.random(nt), rng.random(nt)
    ml = {"F1": F1, "F2": F2, "S1": 1 - F1, "S2": 1 - F2,
          "f1": rng.random(nt) * 0.05 + 1e-3, "f2": rng.random(nt) * 0.05 + 1e-3,
          "cens": (rng.random(nt) < 0.1).astype(float), "df": float(nt - 1)}
    days = np.arange(1.0, 121.0)
    xi1 = 3.8 + 0.3 * rng.normal(size=nt)
    xi2 = 3.8 + 0.3 * rng.normal(size=nt)
    tt = np.exp(3.8 + 0.6 * rng.normal(size=nt))
    yy = (tt[:, None] > days[None, :]).astype(float)
    ww = np.ones_like(yy)

    def grid(K, xi):
        z = (np.log(days)[None, :] - xi[:, None]) / 0.56
        F = np.ascontiguousarray(K.ndtr(z))
        return F, np.ascontiguousarray(K.ndtr(-z))

    def ibs_data(K):
        F1g, S1g = grid(K, xi1)
        F2g, S2g = grid(K, xi2)
        return {"F1": F1g, "F2": F2g, "S1": S1g, "S2": S2g, "Y": yy, "W": ww}

    return [
        ("ndtr", lambda K: K.ndtr(x)),
        ("ndtri", lambda K: K.ndtri(p)),
        ("betaincc", lambda K: K.betaincc(2.5, 1.7, u, 1.0 - u)),
        ("stdtr", lambda K: K.stdtr(9.0, x[: n // 4])),
        ("km_steps", lambda K: K.km_steps(T.ravel(), E.ravel())),
        ("fit_lognormal_batch", lambda K: K.fit_lognormal_batch(T, E, 0.01, 1e-8, 5000)),
        ("optimize lp_ml", lambda K: K.optimize_combo("lp_ml", ml, [0.0], (0, -1, -1),
                                                      (0.0, 0.0, 0.0), [0.5], 1e-8, 1e-8, 5000)),
        ("optimize gp_ml", lambda K: K.optimize_combo("gp_ml", ml, [0.0, 0.0, 0.0], (0, 1, 2),
                                                      (0.0, 0.0, 0.0), [0.5] * 3, 1e-8, 1e-8, 5000)),
        ("optimize bp_ibs", lambda K, d={}: K.optimize_combo(
            "bp_ibs", d.setdefault(K.BACKEND, ibs_data(K)), [0.0, 0.0, 0.0], (0, 1, 2),
            (0.0, 0.0, 0.0), [0.5] * 3, 1e-8, 1e-8, 5000)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="use inputs 10x smaller")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the results to this file")
    args = ap.parse_args(argv)

    try:
        fast = get_kernels("compiled")
    except ImportError:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    slow = get_kernels("python")
    scale = 0.1 if args.quick else 1.0

    rows = []
    print(f"{'kernel':<22}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}{'max |diff|':>13}")
    for name, fn in cases(scale):
        ts, rs = _best(lambda: fn(slow), args.repeat)
        tf, rf = _best(lambda: fn(fast), args.repeat)
        diff = _max_diff(rs, rf)
        rows.append({"kernel": name, "python": ts, "compiled": tf, "speedup": ts / tf,
                     "max_abs_diff": diff})
        print(f"{name:<22}{ts:>12.4f}{tf:>14.4f}{ts / tf:>9.1f}x{diff:>13.2e}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
