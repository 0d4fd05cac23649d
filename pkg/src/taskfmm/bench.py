"""Experiment driver: datasets, single runs and strong-scaling sweeps."""

from __future__ import annotations

import csv
import itertools
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import tables
from .oracle import ErrorReport, compare, direct_sum
from .scheduler import Scheduler, SchedulerConfig
from .traversal import InteractionLog, SchedulerSink, TraversalConfig, dual_tree_traverse, make_engine
from .tree import Bodies, build_tree

logger = logging.getLogger(__name__)

DISTRIBUTIONS = ("cube", "sphere-surface", "cluster")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of Vigna's splitmix64 generator started at ``seed``.

    State advances by 0x9E3779B97F4A7C15; output mixing uses shifts
    30/27/31 and multipliers 0xBF58476D1CE4E5B9, 0x94D049BB133111EB.
    """
    with np.errstate(over="ignore"):
        z = np.uint64(seed % 2**64) + _GOLDEN * np.arange(1, n + 1, dtype=np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def uniform01(seed: int, n: int) -> np.ndarray:
    """Doubles in ``[0, 1)`` from the top 53 bits of :func:`splitmix64`."""
    return (splitmix64(seed, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def generate_bodies(distribution: str, n: int, seed: int = 0) -> Bodies:
    if n < 1:
        raise ValueError("n must be >= 1")
    if distribution not in DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {distribution!r}")
    u = uniform01(seed, 6 * n).reshape(n, 6)
    q = 2.0 * u[:, 5] - 1.0
    q -= q.mean()
    if distribution == "cube":
        x = u[:, :3].copy()
    elif distribution == "sphere-surface":
        z = 2.0 * u[:, 0] - 1.0
        ang = 2.0 * np.pi * u[:, 1]
        rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        x = np.stack([rho * np.cos(ang), rho * np.sin(ang), z], axis=1)
    else:
        n_blobs, sigma = 8, 0.04
        centers = 0.2 + 0.6 * uniform01(seed ^ 0x5EED, 3 * n_blobs).reshape(n_blobs, 3)
        blob = np.minimum((u[:, 0] * n_blobs).astype(np.int64), n_blobs - 1)
        # Box-Muller: 1 - u lies in (0, 1]
        r = np.sqrt(-2.0 * np.log(1.0 - u[:, 1:3]))
        ang = 2.0 * np.pi * u[:, 3:5]
        g = np.concatenate([r * np.cos(ang), (r * np.sin(ang))[:, :1]], axis=1)
        x = centers[blob] + sigma * g
    return Bodies(x, q)


def default_q(n: int) -> int:
    return max(n // 100, 64)


@dataclass
class RunConfig:
    n: int = 10_000
    p: int = 6
    q: int | None = None
    threads: int = 1
    theta: float = 0.5
    ncrit: int = 64
    mutual: bool = False
    dist: str = "cube"
    seed: int = 0
    check: bool = False
    check_tol: float = 1e-2
    window: int | None = None
    backend: str | None = None
    trace: str | None = None
    dag: str | None = None
    record: bool = False

    def __post_init__(self):
        for name in ("n", "p", "threads", "ncrit"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.q is not None and self.q < 1:
            raise ValueError("q must be >= 1")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")

    @property
    def queue_threshold(self) -> int:
        return self.q if self.q is not None else default_q(self.n)


@dataclass
class RunResult:
    config: RunConfig
    times: dict
    n_tasks: int
    log: InteractionLog
    potentials: np.ndarray = field(repr=False)
    error: ErrorReport | None = None
    scheduler: Scheduler | None = field(default=None, repr=False)

    @property
    def time_total(self) -> float:
        return sum(self.times.values())

    @property
    def passed(self) -> bool:
        return self.error is None or self.error.rel_l2 <= self.config.check_tol


def run_once(cfg: RunConfig) -> RunResult:
    """Build, upward pass, scheduled traversal, downward pass, optional check."""
    bodies = generate_bodies(cfg.dist, cfg.n, cfg.seed)
    tables(cfg.p)  # one-off per order, kept out of the timings
    times = {}
    t0 = time.perf_counter()
    tree = build_tree(bodies, cfg.ncrit, cfg.p)
    engine = make_engine(tree, cfg.theta, cfg.backend)
    t1 = time.perf_counter()
    times["build"] = t1 - t0
    engine.upward()
    t2 = time.perf_counter()
    times["upward"] = t2 - t1
    sched = Scheduler(SchedulerConfig(
        num_workers=cfg.threads, window_size=cfg.window,
        trace_enabled=cfg.trace is not None, dag_capture=cfg.dag is not None,
    ))
    log = InteractionLog(record=cfg.record)
    tcfg = TraversalConfig(theta=cfg.theta, Q=cfg.queue_threshold, mutual=cfg.mutual, p=cfg.p)
    with sched:
        res = dual_tree_traverse(tree, tcfg, SchedulerSink(sched, engine, cfg.mutual, log),
                                 engine=engine, log=log)
    t3 = time.perf_counter()
    times["traversal"] = t3 - t2
    engine.downward()
    times["downward"] = time.perf_counter() - t3
    phi = tree.potentials_in_input_order()
    error = None
    if cfg.check:
        error = compare(phi, direct_sum(bodies.positions, bodies.charges))
    if cfg.trace:
        sched.export_trace(cfg.trace)
    if cfg.dag:
        sched.export_dag(cfg.dag)
    logger.info("N=%d p=%d Q=%d T=%d: %.3fs, %d tasks", cfg.n, cfg.p, cfg.queue_threshold,
                cfg.threads, sum(times.values()), res.n_tasks)
    return RunResult(cfg, times, res.n_tasks, log, phi, error, sched)


SWEEP_COLUMNS = [
    "p", "n", "q", "threads", "theta", "ncrit", "mutual", "dist", "seed",
    "time_build", "time_upward", "time_traversal", "time_downward", "time_total",
    "tasks", "speedup_vs_T1", "efficiency", "efficiency_flag", "rel_l2",
]


def parse_sweep(text: str) -> dict:
    """Parse ``"p=6;n=1e5,1e6;q=1000;t=1,2,4"`` into value lists."""
    aliases = {"t": "threads", "threads": "threads", "p": "p", "n": "n", "q": "q"}
    out = {}
    for part in filter(None, (s.strip() for s in text.split(";"))):
        name, _, vals = part.partition("=")
        key = aliases.get(name.strip().lower())
        if key is None or not vals:
            raise ValueError(f"bad sweep term {part!r}")
        out[key] = [int(float(v)) for v in vals.split(",")]
    return out


def result_row(r: RunResult, speedup=None) -> dict:
    c = r.config
    eff = None if speedup is None else speedup / c.threads
    return {
        "p": c.p, "n": c.n, "q": c.queue_threshold, "threads": c.threads,
        "theta": c.theta, "ncrit": c.ncrit, "mutual": int(c.mutual),
        "dist": c.dist, "seed": c.seed,
        "time_build": r.times["build"], "time_upward": r.times["upward"],
        "time_traversal": r.times["traversal"], "time_downward": r.times["downward"],
        "time_total": r.time_total, "tasks": r.n_tasks,
        "speedup_vs_T1": "" if speedup is None else speedup,
        "efficiency": "" if eff is None else eff,
        "efficiency_flag": "" if eff is None else int(eff > 1.1),
        "rel_l2": "" if r.error is None else r.error.rel_l2,
    }


def write_rows(path: str, rows: list[dict]):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        w.writerows(rows)


def run_sweep(base: RunConfig, ranges: dict, csv_path: str | None = None) -> list[dict]:
    """Cartesian sweep over ``p``, ``n``, ``q`` and ``threads``.

    Speedup is taken against the T=1 run of the same ``(p, n, q)``; that
    baseline is run even when 1 is not in the thread range.
    """
    grid = {k: list(ranges.get(k) or [getattr(base, k)]) for k in ("p", "n", "q", "threads")}
    rows = []
    for p, n, q in itertools.product(grid["p"], grid["n"], grid["q"]):
        threads = sorted(set(grid["threads"]))
        cfg = replace(base, p=p, n=n, q=q, trace=None, dag=None)
        baseline = None
        if threads[0] != 1:
            baseline = run_once(replace(cfg, threads=1)).time_total
        for t in threads:
            r = run_once(replace(cfg, threads=t))
            if t == 1:
                baseline = r.time_total
            speedup = baseline / r.time_total
            if speedup / t > 1.1:
                logger.warning("efficiency %.2f above 1.1 for p=%d n=%d q=%s T=%d",
                               speedup / t, p, n, q, t)
            rows.append(result_row(r, speedup))
    if csv_path:
        write_rows(csv_path, rows)
    return rows
