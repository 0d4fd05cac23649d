"""Command-line driver.

    taskfmm --n 100000 --p 6 --threads 4 --check
    taskfmm --sweep "p=6;n=1e5,1e6;q=1000,10000;t=1,2,4" --csv scaling.csv
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import backend
from .bench import DISTRIBUTIONS, RunConfig, parse_sweep, result_row, run_once, run_sweep, write_rows


def _positive_int(text):
    v = int(float(text))
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="taskfmm", description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=_positive_int, default=10_000, help="number of bodies")
    ap.add_argument("--p", type=_positive_int, default=6, help="expansion order")
    ap.add_argument("--q", type=_positive_int, default=None,
                    help="queue threshold for shipping super-tasks (default max(N/100, 64))")
    ap.add_argument("--threads", type=_positive_int, default=1)
    ap.add_argument("--theta", type=float, default=0.5)
    ap.add_argument("--ncrit", type=_positive_int, default=64)
    mode = ap.add_mutually_exclusive_group()
    mode.add_argument("--mutual", dest="mutual", action="store_true")
    mode.add_argument("--non-mutual", dest="mutual", action="store_false")
    ap.set_defaults(mutual=False)
    ap.add_argument("--dist", choices=DISTRIBUTIONS, default="cube")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--window", type=_positive_int, default=None, help="scheduler task window")
    ap.add_argument("--backend", choices=["auto"] + backend.available(), default="auto")
    ap.add_argument("--check", action="store_true", help="compare against direct summation")
    ap.add_argument("--check-tol", type=float, default=1e-2)
    ap.add_argument("--trace", metavar="PATH", help="write the task trace CSV")
    ap.add_argument("--dag", metavar="PATH", help="write the task DAG as DOT")
    ap.add_argument("--csv", metavar="PATH", help="write result rows as CSV")
    ap.add_argument("--sweep", metavar="GRID", help='e.g. "p=6;n=1e5,1e6;q=1000;t=1,2,4"')
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig(
            n=args.n, p=args.p, q=args.q, threads=args.threads, theta=args.theta,
            ncrit=args.ncrit, mutual=args.mutual, dist=args.dist, seed=args.seed,
            check=args.check, check_tol=args.check_tol, window=args.window,
            backend=args.backend, trace=args.trace, dag=args.dag,
        )
        if args.sweep:
            rows = run_sweep(cfg, parse_sweep(args.sweep), args.csv)
            for row in rows:
                print(f"p={row['p']} n={row['n']} q={row['q']} T={row['threads']} "
                      f"time={row['time_total']:.3f}s speedup={row['speedup_vs_T1']:.2f} "
                      f"eff={row['efficiency']:.2f}")
            return 0 if all(r["rel_l2"] == "" or r["rel_l2"] <= cfg.check_tol for r in rows) else 1
        r = run_once(cfg)
    except (ValueError, OSError) as exc:
        print(f"taskfmm: error: {exc}", file=sys.stderr)
        return 2
    t = r.times
    print(f"N={cfg.n} p={cfg.p} Q={cfg.queue_threshold} T={cfg.threads} "
          f"mode={'mutual' if cfg.mutual else 'non-mutual'}")
    print(f"build {t['build']:.3f}s  upward {t['upward']:.3f}s  "
          f"traversal {t['traversal']:.3f}s  downward {t['downward']:.3f}s  "
          f"total {r.time_total:.3f}s")
    print(f"tasks {r.n_tasks}  m2l {r.log.m2l}  p2p {r.log.p2p}")
    if args.csv:
        write_rows(args.csv, [result_row(r, 1.0 if cfg.threads == 1 else None)])
    if r.error is not None:
        print(f"rel_l2 {r.error.rel_l2:.3e}  rel_linf {r.error.rel_linf:.3e}")
        if not r.passed:
            print(f"taskfmm: check failed (tol {cfg.check_tol:g})", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
