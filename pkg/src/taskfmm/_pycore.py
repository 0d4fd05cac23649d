"""Pure-Python engine, used when the compiled extension is unavailable.

Same interface and the same traversal order as the compiled engine; the
kernels come from :mod:`taskfmm.kernels`.  Results agree with the compiled
engine to rounding, and the interaction sequence is identical.
"""

from collections import deque
from math import sqrt

import numpy as np

from . import kernels

BACKEND = "python"


class Engine:
    def __init__(self, tree, tables, theta):
        self.p = tables.p
        self.theta = float(theta)
        self.tree = tree
        self._theta2 = self.theta * self.theta
        self._rad = (tree.radius * sqrt(3.0)).tolist()
        self._center = tree.center.tolist()

    def upward(self):
        tr = self.tree
        b = tr.bodies
        for c in range(tr.n_cells - 1, -1, -1):
            if tr.child_count[c] == 0:
                lo, hi = tr.body_begin[c], tr.body_end[c]
                kernels.p2m(b.positions[lo:hi], b.charges[lo:hi], tr.center[c], self.p,
                            out=tr.multipole[c])
            else:
                for ch in tr.children(c):
                    kernels.m2m(tr.multipole[ch], tr.center[ch] - tr.center[c],
                                out=tr.multipole[c])

    def downward(self):
        tr = self.tree
        b = tr.bodies
        for c in range(tr.n_cells):
            if tr.child_count[c] == 0:
                lo, hi = tr.body_begin[c], tr.body_end[c]
                kernels.l2p(tr.local[c], b.positions[lo:hi], tr.center[c],
                            b.potentials[lo:hi])
            else:
                for ch in tr.children(c):
                    kernels.l2l(tr.local[c], tr.center[ch] - tr.center[c], out=tr.local[ch])

    def mac(self, t, s):
        ct, cs = self._center[t], self._center[s]
        dx, dy, dz = ct[0] - cs[0], ct[1] - cs[1], ct[2] - cs[2]
        rs = self._rad[t] + self._rad[s]
        # same operation order as the compiled engine: borderline pairs are common
        return rs * rs < self._theta2 * (dx * dx + dy * dy + dz * dz)

    def _split_target(self, t, s):
        tr = self.tree
        if tr.child_count[t] == 0:
            return False
        if tr.child_count[s] == 0:
            return True
        if tr.radius[t] != tr.radius[s]:
            return tr.radius[t] > tr.radius[s]
        return t <= s

    def _step(self, t, s, mutual, stats, rec):
        tr = self.tree
        if t != s and self.mac(t, s):
            R = tr.center[s] - tr.center[t]
            kernels.m2l(tr.multipole[s], R, out=tr.local[t])
            if mutual:
                kernels.m2l(tr.multipole[t], R, out=tr.local[s], reverse=True)
            stats[0] += 1
            if rec is not None:
                rec.append((0, t, s))
            return []
        if tr.child_count[t] == 0 and tr.child_count[s] == 0:
            b = tr.bodies
            tl, th = tr.body_begin[t], tr.body_end[t]
            sl, sh = tr.body_begin[s], tr.body_end[s]
            stats[2] += kernels.p2p(
                b.positions[tl:th], b.potentials[tl:th], b.positions[sl:sh],
                b.charges[sl:sh], mutual=mutual, target_q=b.charges[tl:th],
                source_phi=b.potentials[sl:sh], self_pair=(t == s),
            )
            stats[1] += 1
            if rec is not None:
                rec.append((1, t, s))
            return []
        if mutual and t == s:
            kids = list(tr.children(t))
            return [(kids[i], kids[j]) for i in range(len(kids)) for j in range(i, len(kids))]
        if self._split_target(t, s):
            return [(c, s) for c in tr.children(t)]
        return [(t, c) for c in tr.children(s)]

    def bfs(self, pairs, Q, mutual, record_pairs=False):
        queue = deque((int(t), int(s)) for t, s in np.asarray(pairs).reshape(-1, 2))
        stats = [0, 0, 0]
        rec = [] if record_pairs else None
        while queue and len(queue) < Q:
            t, s = queue.popleft()
            queue.extend(self._step(t, s, mutual, stats, rec))
        out = np.array(list(queue), dtype=np.int64).reshape(-1, 2)
        return out, tuple(stats), _records(rec)

    def interact(self, t, s, mutual, record_pairs=False):
        stats = [0, 0, 0]
        rec = [] if record_pairs else None
        stack = [(int(t), int(s))]
        while stack:
            t, s = stack.pop()
            stack.extend(reversed(self._step(t, s, mutual, stats, rec)))
        return tuple(stats), _records(rec)


def _records(rec):
    if rec is None:
        return np.empty((0, 3), dtype=np.int64)
    return np.array(rec, dtype=np.int64).reshape(-1, 3)
