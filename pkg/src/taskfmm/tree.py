"""Adaptive cubic octree with Morton-ordered bodies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .kernels import n_coef

MAX_LEVEL = 21  # 3 * 21 = 63 key bits
BOUNDS_MARGIN = 1e-6
MIN_HALF_SIDE = 0.5


@dataclass
class Bodies:
    """Positions ``(n, 3)``, charges ``(n,)`` and potential accumulators ``(n,)``."""

    positions: np.ndarray
    charges: np.ndarray
    potentials: np.ndarray = None

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.charges = np.ascontiguousarray(self.charges, dtype=np.float64).reshape(-1)
        if len(self.charges) != len(self.positions):
            raise ValueError("positions and charges differ in length")
        if self.potentials is None:
            self.potentials = np.zeros(len(self.charges))
        else:
            self.potentials = np.ascontiguousarray(self.potentials, dtype=np.float64)

    def __len__(self):
        return len(self.charges)


class Domain(NamedTuple):
    center: np.ndarray
    half_side: float

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.half_side

    def contains(self, positions) -> np.ndarray:
        d = np.abs(np.atleast_2d(positions) - self.center)
        return np.all(d <= self.half_side, axis=1)


class Cell(NamedTuple):
    level: int
    morton_key: int
    center: np.ndarray
    radius: float
    body_begin: int
    body_end: int
    child_begin: int
    child_count: int
    multipole: np.ndarray
    local: np.ndarray

    @property
    def is_leaf(self) -> bool:
        return self.child_count == 0


def compute_bounds(positions) -> Domain:
    """Smallest cube, slightly enlarged, around the per-axis extent of ``positions``."""
    x = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    if x.size == 0:
        raise ValueError("empty input")
    lo, hi = x.min(axis=0), x.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * float(np.max(hi - lo)) * (1.0 + BOUNDS_MARGIN)
    if half <= 0.0:
        half = MIN_HALF_SIDE
    return Domain(center, half)


def _spread_bits(v: np.ndarray) -> np.ndarray:
    # spread the low 21 bits of v so they occupy every third bit
    v = v.astype(np.uint64) & np.uint64(0x1FFFFF)
    v = (v | (v << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v << np.uint64(2))) & np.uint64(0x1249249249249249)
    return v


def _compact_bits(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.uint64) & np.uint64(0x1249249249249249)
    v = (v | (v >> np.uint64(2))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v >> np.uint64(4))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v >> np.uint64(8))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v >> np.uint64(16))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v >> np.uint64(32))) & np.uint64(0x1FFFFF)
    return v


def _axis_indices(positions, domain: Domain, level: int) -> np.ndarray:
    u = (np.atleast_2d(positions) - domain.lower) / (2.0 * domain.half_side)
    n = 1 << level
    idx = np.floor(u * n)
    return np.clip(idx, 0, n - 1).astype(np.uint64)


def interleave(ix, iy, iz) -> np.ndarray:
    """Morton key from per-axis indices, x in the lowest bit."""
    return (_spread_bits(np.asarray(ix))
            | (_spread_bits(np.asarray(iy)) << np.uint64(1))
            | (_spread_bits(np.asarray(iz)) << np.uint64(2)))


def morton_keys(positions, domain: Domain, level: int) -> np.ndarray:
    if level < 0 or level > MAX_LEVEL:
        raise ValueError("level overflow")
    idx = _axis_indices(positions, domain, level)
    return interleave(idx[:, 0], idx[:, 1], idx[:, 2])


def morton_key(position, domain: Domain, level: int) -> int:
    return int(morton_keys(np.asarray(position, dtype=np.float64).reshape(1, 3), domain, level)[0])


@dataclass
class Tree:
    """Octree over Morton-sorted bodies, stored as parallel cell arrays.

    Cells are level-contiguous and the children of a cell are contiguous,
    so ``child_begin[c] .. child_begin[c] + child_count[c]`` enumerates them.
    ``order[i]`` is the input index of sorted body ``i``.
    """

    domain: Domain
    bodies: Bodies
    order: np.ndarray
    n_crit: int
    p: int
    level: np.ndarray
    morton_key: np.ndarray
    center: np.ndarray
    radius: np.ndarray
    body_begin: np.ndarray
    body_end: np.ndarray
    child_begin: np.ndarray
    child_count: np.ndarray
    parent: np.ndarray
    multipole: np.ndarray = field(repr=False, default=None)
    local: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        nc = n_coef(self.p)
        if self.multipole is None:
            self.multipole = np.zeros((self.n_cells, nc))
        if self.local is None:
            self.local = np.zeros((self.n_cells, nc))

    @property
    def n_cells(self) -> int:
        return len(self.level)

    @property
    def n_bodies(self) -> int:
        return len(self.bodies)

    def is_leaf(self, c: int) -> bool:
        return self.child_count[c] == 0

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.child_count == 0)

    def children(self, c: int) -> range:
        b = int(self.child_begin[c])
        return range(b, b + int(self.child_count[c]))

    def cell(self, c: int) -> Cell:
        return Cell(
            int(self.level[c]), int(self.morton_key[c]), self.center[c],
            float(self.radius[c]), int(self.body_begin[c]), int(self.body_end[c]),
            int(self.child_begin[c]), int(self.child_count[c]),
            self.multipole[c], self.local[c],
        )

    def reset_expansions(self):
        self.multipole[:] = 0.0
        self.local[:] = 0.0
        self.bodies.potentials[:] = 0.0

    def potentials_in_input_order(self) -> np.ndarray:
        out = np.empty_like(self.bodies.potentials)
        out[self.order] = self.bodies.potentials
        return out


def build_tree(bodies: Bodies, n_crit: int = 64, p: int = 6) -> Tree:
    if len(bodies) == 0:
        raise ValueError("empty input")
    if n_crit < 1 or p < 1:
        raise ValueError("n_crit and p must be >= 1")
    domain = compute_bounds(bodies.positions)
    keys = morton_keys(bodies.positions, domain, MAX_LEVEL)
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    sorted_bodies = Bodies(bodies.positions[order], bodies.charges[order])

    level, key, bbeg, bend, cbeg, ccnt, parent = [], [], [], [], [], [], []

    def add(lv, k, b, e, par):
        level.append(lv)
        key.append(k)
        bbeg.append(b)
        bend.append(e)
        cbeg.append(0)
        ccnt.append(0)
        parent.append(par)

    add(0, 0, 0, len(keys), -1)
    frontier = [0]
    lv = 0
    while frontier and lv < MAX_LEVEL:
        nxt = []
        shift = np.uint64(3 * (MAX_LEVEL - lv - 1))
        for c in frontier:
            b, e = bbeg[c], bend[c]
            if e - b <= n_crit:
                continue
            octant = (keys[b:e] >> shift) & np.uint64(7)
            cuts = np.searchsorted(octant, np.arange(9, dtype=np.uint64))
            cbeg[c] = len(level)
            for o in range(8):
                lo, hi = b + int(cuts[o]), b + int(cuts[o + 1])
                if hi > lo:
                    nxt.append(len(level))
                    add(lv + 1, (key[c] << 3) | o, lo, hi, c)
            ccnt[c] = len(level) - cbeg[c]
        frontier = nxt
        lv += 1

    level = np.array(level, dtype=np.int64)
    mkey = np.array(key, dtype=np.uint64)
    # decode each cell's per-axis index from its key to place its center
    ix = _compact_bits(mkey)
    iy = _compact_bits(mkey >> np.uint64(1))
    iz = _compact_bits(mkey >> np.uint64(2))
    side = 2.0 * domain.half_side / np.exp2(level)
    idx = np.stack([ix, iy, iz], axis=1).astype(np.float64)
    center = domain.lower + (idx + 0.5) * side[:, None]
    radius = domain.half_side / np.exp2(level)
    return Tree(
        domain=domain,
        bodies=sorted_bodies,
        order=order,
        n_crit=n_crit,
        p=p,
        level=level,
        morton_key=mkey,
        center=np.ascontiguousarray(center),
        radius=radius,
        body_begin=np.array(bbeg, dtype=np.int64),
        body_end=np.array(bend, dtype=np.int64),
        child_begin=np.array(cbeg, dtype=np.int64),
        child_count=np.array(ccnt, dtype=np.int64),
        parent=np.array(parent, dtype=np.int64),
    )
