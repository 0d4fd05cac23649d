"""Upward pass, dual tree traversal with queue-threshold task shipping, downward pass.

The traversal starts from the root-root pair and expands pairs breadth
first on the calling thread.  Once the FIFO queue holds ``Q`` pairs, every
queued pair is handed to a sink as one super-task: a serial traversal of
that subtree pair that applies M2L and P2P as it goes.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from . import backend as _backend
from .kernels import tables
from .scheduler import INOUT, LOCALITY, NODEP, OUTPUT, VALUE, DataHandle, Scheduler
from .tree import Cell, Tree

M2L, P2P = 0, 1


@dataclass
class TraversalConfig:
    theta: float = 0.5
    Q: int = 64
    mutual: bool = False
    p: int = 6

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.Q < 1:
            raise ValueError("Q must be >= 1")


def mac(target: Cell, source: Cell, theta: float) -> bool:
    """True when the circumscribed spheres are well separated for ``theta``."""
    d = np.asarray(target.center, dtype=float) - np.asarray(source.center, dtype=float)
    dist = sqrt(float(d @ d))
    return (target.radius + source.radius) * sqrt(3.0) < theta * dist


def split_pair(pair, tree: Tree, source_tree: Tree | None = None) -> list[tuple[int, int]]:
    """Children of the larger cell paired with the other cell.

    A leaf is never split.  Equal radii split the cell with the lower
    index (the target for a self pair), which makes ``(a, b)`` and
    ``(b, a)`` expand into mirror images of each other.
    """
    src = _same_tree(tree, source_tree)
    t, s = int(pair[0]), int(pair[1])
    t_leaf, s_leaf = tree.is_leaf(t), src.is_leaf(s)
    if t_leaf and s_leaf:
        raise ValueError("cannot split leaf pair")
    if s_leaf:
        split_t = True
    elif t_leaf:
        split_t = False
    elif tree.radius[t] != src.radius[s]:
        split_t = tree.radius[t] > src.radius[s]
    else:
        split_t = t <= s
    if split_t:
        return [(c, s) for c in tree.children(t)]
    return [(t, c) for c in src.children(s)]


def _same_tree(tree, source_tree):
    if source_tree is not None and source_tree is not tree:
        raise ValueError("distinct source trees are not supported")
    return tree


def make_engine(tree: Tree, theta: float = 0.5, backend=None):
    mod = backend if hasattr(backend, "Engine") else _backend.get_backend(backend)
    return mod.Engine(tree, tables(tree.p), theta)


def upward_pass(tree: Tree, engine=None):
    (engine or make_engine(tree)).upward()


def downward_pass(tree: Tree, engine=None):
    (engine or make_engine(tree)).downward()


@dataclass
class InteractionLog:
    """Thread-safe collector of kernel counts and, optionally, emitted pairs."""

    record: bool = False
    m2l: int = 0
    p2p: int = 0
    p2p_evals: int = 0
    _records: list = field(default_factory=list, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, stats, rec):
        with self._lock:
            self.m2l += stats[0]
            self.p2p += stats[1]
            self.p2p_evals += stats[2]
            if self.record and len(rec):
                self._records.append(rec)

    def interactions(self) -> np.ndarray:
        """Emitted ``(kind, target, source)`` rows, sorted."""
        if not self._records:
            return np.empty((0, 3), dtype=np.int64)
        rec = np.concatenate(self._records)
        return rec[np.lexsort(rec.T[::-1])]


class CellRegion(DataHandle):
    """Scheduler handle for the subtree of ``cell``.

    ``key`` is the outermost cell, among those handed to the scheduler,
    whose subtree contains ``cell``; nested subtrees therefore alias.
    """

    def __init__(self, key, cell):
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "cell", cell)

    def __repr__(self):
        return f"CellRegion(key={self.key}, cell={self.cell})"


def region_keys(tree: Tree, cells) -> dict[int, int]:
    """Map each cell to the outermost listed cell whose body range contains it."""
    cells = np.unique(np.asarray(cells, dtype=np.int64))
    if cells.size == 0:
        return {}
    b, e, lv = tree.body_begin[cells], tree.body_end[cells], tree.level[cells]
    order = np.lexsort((lv, -e, b))
    out = {}
    outer, outer_end = -1, -1
    for c in cells[order]:
        c = int(c)
        if tree.body_begin[c] < outer_end:
            out[c] = outer
        else:
            outer, outer_end = c, int(tree.body_end[c])
            out[c] = c
    return out


def _interact(target, source, mutual, engine, log):
    stats, rec = engine.interact(target.cell, source.cell, mutual, log.record)
    log.add(stats, rec)


class SerialSink:
    """Runs every shipped pair immediately, in shipping order."""

    def __init__(self, engine, mutual, log):
        self.engine, self.mutual, self.log = engine, mutual, log
        self.n_tasks = 0

    def submit(self, tree, pairs):
        for t, s in pairs:
            _interact(CellRegion(t, int(t)), CellRegion(s, int(s)), self.mutual,
                      self.engine, self.log)
            self.n_tasks += 1

    def finish(self):
        pass


class SchedulerSink:
    """Inserts one scheduler task per shipped pair.

    Non-mutual tasks write the target subtree (``OUTPUT | LOCALITY``) and
    only read the source; mutual tasks write both (``INOUT``).
    """

    def __init__(self, scheduler: Scheduler, engine, mutual, log):
        self.scheduler, self.engine, self.mutual, self.log = scheduler, engine, mutual, log
        self.n_tasks = 0

    def submit(self, tree, pairs):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        written = pairs.reshape(-1) if self.mutual else pairs[:, 0]
        keys = region_keys(tree, written)
        ins = self.scheduler.insert_task
        for t, s in pairs.tolist():
            if self.mutual:
                ins(_interact, (CellRegion(keys[t], t), INOUT), (CellRegion(keys[s], s), INOUT),
                    (True, VALUE), (self.engine, NODEP), (self.log, NODEP), name="interact")
            else:
                ins(_interact, (CellRegion(keys[t], t), OUTPUT | LOCALITY),
                    (CellRegion(s, s), NODEP), (False, VALUE), (self.engine, NODEP),
                    (self.log, NODEP), name="interact")
            self.n_tasks += 1

    def finish(self):
        self.scheduler.wait_all()


@dataclass
class TraversalResult:
    log: InteractionLog
    shipped: np.ndarray
    n_tasks: int


def dual_tree_traverse(tree: Tree, cfg: TraversalConfig, sink=None, source_tree=None,
                       engine=None, log: InteractionLog | None = None) -> TraversalResult:
    """Find and apply all M2L/P2P interactions of ``tree`` with itself.

    Pairs are expanded inline until the queue reaches ``cfg.Q``; the queue is
    then drained once into ``sink`` and the sink is finished.
    """
    _same_tree(tree, source_tree)
    engine = engine or make_engine(tree, cfg.theta)
    log = log or InteractionLog()
    sink = sink or SerialSink(engine, cfg.mutual, log)
    root = np.zeros((1, 2), dtype=np.int64)
    remaining, stats, rec = engine.bfs(root, cfg.Q, cfg.mutual, log.record)
    log.add(stats, rec)
    if len(remaining):
        sink.submit(tree, remaining)
    sink.finish()
    return TraversalResult(log, remaining, sink.n_tasks)


def pair_levels(tree: Tree, pairs) -> np.ndarray:
    """Tree level of each pair, taken as the deeper of its two cells."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return np.maximum(tree.level[pairs[:, 0]], tree.level[pairs[:, 1]])


def evaluate(tree: Tree, cfg: TraversalConfig, scheduler: Scheduler | None = None,
             backend=None, record: bool = False) -> TraversalResult:
    """Full FMM pass: upward, traversal (scheduled if ``scheduler``), downward."""
    if cfg.p != tree.p:
        raise ValueError("traversal order differs from the tree's expansion order")
    tree.reset_expansions()
    engine = make_engine(tree, cfg.theta, backend)
    engine.upward()
    log = InteractionLog(record=record)
    sink = (SchedulerSink(scheduler, engine, cfg.mutual, log) if scheduler is not None
            else SerialSink(engine, cfg.mutual, log))
    result = dual_tree_traverse(tree, cfg, sink, engine=engine, log=log)
    engine.downward()
    return result
