"""Dataflow task runtime.

Tasks are inserted in program order from one master thread, each with its
arguments tagged by access mode.  Dependencies are inferred from RAW, WAR
and WAW hazards on the argument handles, so the task DAG is implicit.
Ready tasks are queued on worker deques and run by a pool of threads that
steal from each other when idle.  At most ``window_size`` inserted tasks
may be unfinished at any time, and the master runs tasks itself while it
waits for room.

Example::

    with Scheduler(SchedulerConfig(num_workers=4)) as sched:
        for ci, cj in pairs:
            sched.insert_task(interact, (ci, OUTPUT | LOCALITY), (cj, NODEP),
                              (False, VALUE))
"""

from __future__ import annotations

import copy
import csv
import enum
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Hashable

__all__ = [
    "Mode", "VALUE", "INPUT", "OUTPUT", "INOUT", "NODEP", "LOCALITY",
    "DataHandle", "State", "Task", "SchedulerConfig", "Scheduler", "TaskError",
    "SchedulerClosed", "audit_linearization",
]


class Mode(enum.IntFlag):
    VALUE = 1
    INPUT = 2
    OUTPUT = 4
    INOUT = 8
    NODEP = 16
    LOCALITY = 32


VALUE = Mode.VALUE
INPUT = Mode.INPUT
OUTPUT = Mode.OUTPUT
INOUT = Mode.INOUT
NODEP = Mode.NODEP
LOCALITY = Mode.LOCALITY

_WRITE = Mode.OUTPUT | Mode.INOUT


@dataclass(frozen=True)
class DataHandle:
    """Names a memory region; two handles alias iff their keys are equal."""

    key: Hashable


class State(enum.IntEnum):
    NOT_READY = 0
    QUEUED = 1
    DONE = 2


class TaskError(RuntimeError):
    def __init__(self, task_id, cause):
        super().__init__(f"task {task_id} failed: {cause!r}")
        self.task_id = task_id


class SchedulerClosed(RuntimeError):
    pass


class Task:
    __slots__ = ("id", "kernel", "name", "values", "accesses", "locality",
                 "state", "unresolved", "successors", "worker")

    def __init__(self, tid, kernel, name, values, accesses, locality):
        self.id = tid
        self.kernel = kernel
        self.name = name
        self.values = values
        self.accesses = accesses
        self.locality = locality
        self.state = State.NOT_READY
        self.unresolved = 0
        self.successors = []
        self.worker = None

    def __repr__(self):
        return f"Task({self.id}, {self.name}, {self.state.name})"


@dataclass
class SchedulerConfig:
    num_workers: int = 1
    window_size: int | None = None
    trace_enabled: bool = False
    dag_capture: bool = False

    def __post_init__(self):
        if self.num_workers < 1:
            raise ValueError("num_workers must be >= 1")
        if self.window_size is None:
            self.window_size = 10 * self.num_workers * 4
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")


def _handle_key(obj):
    if isinstance(obj, DataHandle):
        return obj.key
    try:
        hash(obj)
    except TypeError:
        return ("id", id(obj))
    return obj


class _Handle:
    __slots__ = ("writer", "readers")

    def __init__(self):
        self.writer = None
        self.readers = []


class Scheduler:
    """Dependency-driven runtime with ``num_workers`` executing threads.

    Worker 0 is the master (the inserting thread); ``num_workers - 1``
    background threads are started by :meth:`run_workers`.
    """

    def __init__(self, config: SchedulerConfig | None = None, **kwargs):
        self.config = config or SchedulerConfig(**kwargs)
        nw = self.config.num_workers
        self._lock = threading.Lock()
        self._cv = [threading.Condition(self._lock) for _ in range(nw)]
        self._queues = [deque() for _ in range(nw)]
        self._idle = set()
        self._threads = []
        self._handles = {}
        self._locality = {}
        self._next_id = 0
        self._pending = 0
        self._running = 0
        self.high_water = 0
        self._closed = False
        self._error = None
        self.tasks = []
        self.edges = []
        self.trace = []

    # -- lifecycle -----------------------------------------------------

    def run_workers(self):
        if self._threads:
            return
        for w in range(1, self.config.num_workers):
            t = threading.Thread(target=self._worker, args=(w,), daemon=True,
                                 name=f"taskfmm-worker-{w}")
            t.start()
            self._threads.append(t)

    def shutdown(self):
        with self._lock:
            self._closed = True
            for cv in self._cv:
                cv.notify_all()
        for t in self._threads:
            t.join()
        self._threads = []

    def __enter__(self):
        self.run_workers()
        return self

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.wait_all()
        finally:
            self.shutdown()

    # -- insertion -----------------------------------------------------

    def insert_task(self, kernel: Callable, *args, name: str | None = None) -> int:
        """Insert ``kernel(*values)``; each arg is ``(value, mode)``.

        Blocks (running tasks on the calling thread) while the window is full.
        """
        values, accesses, locality = [], [], []
        for value, mode in args:
            mode = Mode(mode)
            if mode & VALUE:
                values.append(copy.copy(value))
                continue
            values.append(value)
            if mode & NODEP:
                continue
            key = _handle_key(value)
            accesses.append((key, bool(mode & _WRITE)))
            if mode & LOCALITY:
                locality.append(key)

        with self._lock:
            if self._closed:
                raise SchedulerClosed("insertion after shutdown")
            self._raise_if_failed()
            if self._pending >= self.config.window_size:
                self._help(lambda: self._pending < self.config.window_size)
                self._raise_if_failed()
            task = Task(self._next_id, kernel, name or getattr(kernel, "__name__", "task"),
                        values, accesses, locality)
            self._next_id += 1
            preds = self._dependencies(task)
            if self.config.dag_capture:
                self.edges.extend((p.id, task.id) for p in sorted(preds, key=lambda t: t.id))
            if self.config.dag_capture or self.config.trace_enabled:
                self.tasks.append(task)
            for p in preds:
                if p.state is not State.DONE:
                    p.successors.append(task)
                    task.unresolved += 1
            self._pending += 1
            self.high_water = max(self.high_water, self._pending)
            if task.unresolved == 0:
                self._enqueue(task, master=True)
            return task.id

    def _dependencies(self, task):
        preds = set()
        for key, write in task.accesses:
            h = self._handles.get(key)
            if h is None:
                h = self._handles[key] = _Handle()
            if not write:
                if h.writer is not None and h.writer is not task:
                    preds.add(h.writer)
                if task not in h.readers:
                    h.readers.append(task)
            else:
                if h.readers:
                    preds.update(r for r in h.readers if r is not task)
                elif h.writer is not None and h.writer is not task:
                    preds.add(h.writer)
                h.writer = task
                h.readers = []
        return preds

    # -- execution -----------------------------------------------------

    def wait_all(self):
        with self._lock:
            self._help(lambda: self._pending == 0)
            self._raise_if_failed()

    def _raise_if_failed(self):
        if self._error is not None:
            tid, exc = self._error
            raise TaskError(tid, exc) from exc

    def _enqueue(self, task, master=False):
        task.state = State.QUEUED
        w = 0
        for key in task.locality:
            owner = self._locality.get(key)
            if owner is not None:
                w = owner
                break
        self._queues[w].append(task)
        if w in self._idle:
            self._cv[w].notify()
        elif self._idle:
            # owner is busy: wake one idle thief
            self._cv[next(iter(self._idle))].notify()

    def _next_task(self, w):
        q = self._queues[w]
        if q:
            return q.pop()
        n = len(self._queues)
        for off in range(1, n):
            v = (w + off) % n
            # an idle owner will take its own task as soon as it wakes
            if self._queues[v] and v not in self._idle:
                return self._queues[v].popleft()
        return None

    def _run(self, task, w):
        # called without the lock held
        task.worker = w
        t0 = time.perf_counter_ns()
        if self._error is None:
            try:
                task.kernel(*task.values)
            except Exception as exc:  # reported through wait_all
                with self._lock:
                    if self._error is None:
                        self._error = (task.id, exc)
        t1 = time.perf_counter_ns()
        if self.config.trace_enabled:
            self.trace.append((task.id, w, task.name, t0, t1))

    def _complete(self, task, w):
        # called with the lock held
        task.state = State.DONE
        self._pending -= 1
        self._running -= 1
        for key in task.locality:
            self._locality[key] = w
        for succ in task.successors:
            succ.unresolved -= 1
            if succ.unresolved == 0:
                self._enqueue(succ)
        task.successors = []
        if 0 in self._idle:
            self._cv[0].notify()

    def _execute_one(self, w):
        task = self._next_task(w)
        if task is None:
            return False
        self._running += 1
        self._lock.release()
        try:
            self._run(task, w)
        finally:
            self._lock.acquire()
            self._complete(task, w)
        return True

    def _help(self, done):
        # master loop, lock held
        while not done():
            if not self._execute_one(0):
                self._idle.add(0)
                try:
                    self._cv[0].wait(0.05)
                finally:
                    self._idle.discard(0)

    def _worker(self, w):
        with self._lock:
            while True:
                if self._execute_one(w):
                    continue
                if self._closed:
                    return
                self._idle.add(w)
                try:
                    self._cv[w].wait()
                finally:
                    self._idle.discard(w)

    # -- export --------------------------------------------------------

    def export_dag(self, path):
        if not self.config.dag_capture:
            raise RuntimeError("dag_capture is disabled")
        with open(path, "w") as f:
            f.write("digraph dag {\n")
            for t in self.tasks:
                f.write(f'  t{t.id} [label="{t.name} {t.id}"];\n')
            for a, b in self.edges:
                f.write(f"  t{a} -> t{b};\n")
            f.write("}\n")

    def export_trace(self, path):
        if not self.config.trace_enabled:
            raise RuntimeError("trace is disabled")
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["task_id", "worker_id", "kind", "start_ns", "end_ns"])
            for row in sorted(self.trace, key=lambda r: (r[3], r[0])):
                w.writerow(row)


def audit_linearization(tasks, trace) -> list[tuple[Any, int, int]]:
    """Return ``(handle, task_a, task_b)`` for every overlapping conflicting pair.

    A conflict is two accesses to the same handle, at least one a write,
    whose execution spans intersect in time.
    """
    span = {tid: (t0, t1) for tid, _, _, t0, t1 in trace}
    by_key = {}
    for t in tasks:
        for key, write in t.accesses:
            by_key.setdefault(key, []).append((span[t.id][0], span[t.id][1], t.id, write))
    bad = []
    for key, acc in by_key.items():
        acc.sort()
        writers_open = []
        readers_open = []
        for t0, t1, tid, write in acc:
            writers_open = [a for a in writers_open if a[1] > t0]
            readers_open = [a for a in readers_open if a[1] > t0]
            for a in writers_open:
                if a[2] != tid:
                    bad.append((key, a[2], tid))
            if write:
                for a in readers_open:
                    if a[2] != tid:
                        bad.append((key, a[2], tid))
                writers_open.append((t0, t1, tid))
            else:
                readers_open.append((t0, t1, tid))
    return bad
