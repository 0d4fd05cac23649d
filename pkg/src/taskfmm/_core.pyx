# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled hot loops: kernels, upward/downward sweeps and pair traversal.

Mirrors :mod:`taskfmm._pycore` operation for operation.  Every traversal
entry point releases the GIL so super-tasks run concurrently on worker
threads.
"""

from libc.math cimport sqrt
from libc.stdint cimport int64_t
from libc.stdlib cimport malloc, free
from libcpp.deque cimport deque
from libcpp.pair cimport pair
from libcpp.vector cimport vector

import numpy as np

ctypedef int64_t i64
ctypedef pair[i64, i64] cpair

BACKEND = "compiled"

cdef struct Ctx:
    int n
    double theta2
    const double* pos
    const double* q
    double* phi
    const double* center
    const double* rad      # circumscribed-sphere radius
    const double* radius   # half side, used for the split rule
    const i64* bbeg
    const i64* bend
    const i64* cbeg
    const i64* ccnt
    double* M
    double* L
    i64 ncell
    const i64* parent
    const i64* axis
    const double* inv_axis_exp
    const i64* deg
    const i64* minus1
    const i64* minus2
    i64 n_m2m
    const i64* m2m_out
    const i64* m2m_in
    const i64* m2m_shift
    i64 n_l2l
    const i64* l2l_out
    const i64* l2l_in
    const i64* l2l_shift
    const double* l2l_coef
    i64 n_m2l
    const i64* m2l_out
    const i64* m2l_in
    const i64* m2l_deriv
    const double* m2l_coef
    const double* m2l_coef_rev

cdef struct Stats:
    i64 m2l
    i64 p2p
    i64 evals


cdef inline void monomials(const Ctx* c, double x, double y, double z,
                           double* out, bint scaled) noexcept nogil:
    cdef int i
    cdef double xyz[3]
    xyz[0] = x
    xyz[1] = y
    xyz[2] = z
    out[0] = 1.0
    if scaled:
        for i in range(1, c.n):
            out[i] = out[c.parent[i]] * xyz[c.axis[i]] * c.inv_axis_exp[i]
    else:
        for i in range(1, c.n):
            out[i] = out[c.parent[i]] * xyz[c.axis[i]]


cdef inline void dtable(const Ctx* c, double rx, double ry, double rz,
                        double* D) noexcept nogil:
    cdef int i, ax
    cdef i64 j, k
    cdef double r2 = rx * rx + ry * ry + rz * rz
    cdef double acc
    cdef double R[3]
    R[0] = rx
    R[1] = ry
    R[2] = rz
    D[0] = 1.0 / sqrt(r2)
    for i in range(1, c.n):
        k = c.deg[i]
        acc = 0.0
        for ax in range(3):
            j = c.minus1[3 * i + ax]
            if j >= 0:
                acc = acc + (2 * k - 1) * R[ax] * D[j]
            j = c.minus2[3 * i + ax]
            if j >= 0:
                acc = acc + (k - 1) * D[j]
        D[i] = -acc / (k * r2)


cdef void p2m_cell(const Ctx* c, i64 cell, double* mono) noexcept nogil:
    cdef i64 b, i
    cdef int a
    cdef const double* ctr = c.center + 3 * cell
    cdef double* M = c.M + cell * c.n
    cdef double qb
    for b in range(c.bbeg[cell], c.bend[cell]):
        monomials(c, c.pos[3 * b] - ctr[0], c.pos[3 * b + 1] - ctr[1],
                  c.pos[3 * b + 2] - ctr[2], mono, True)
        qb = c.q[b]
        for a in range(c.n):
            M[a] += qb * mono[a]


cdef void m2m_cell(const Ctx* c, i64 child, i64 parent, double* mono) noexcept nogil:
    cdef i64 k
    cdef const double* cc = c.center + 3 * child
    cdef const double* pc = c.center + 3 * parent
    cdef const double* Mc = c.M + child * c.n
    cdef double* Mp = c.M + parent * c.n
    monomials(c, cc[0] - pc[0], cc[1] - pc[1], cc[2] - pc[2], mono, True)
    for k in range(c.n_m2m):
        Mp[c.m2m_out[k]] += Mc[c.m2m_in[k]] * mono[c.m2m_shift[k]]


cdef void l2l_cell(const Ctx* c, i64 parent, i64 child, double* mono) noexcept nogil:
    cdef i64 k
    cdef const double* cc = c.center + 3 * child
    cdef const double* pc = c.center + 3 * parent
    cdef const double* Lp = c.L + parent * c.n
    cdef double* Lc = c.L + child * c.n
    monomials(c, cc[0] - pc[0], cc[1] - pc[1], cc[2] - pc[2], mono, False)
    for k in range(c.n_l2l):
        Lc[c.l2l_out[k]] += c.l2l_coef[k] * Lp[c.l2l_in[k]] * mono[c.l2l_shift[k]]


cdef void l2p_cell(const Ctx* c, i64 cell, double* mono) noexcept nogil:
    cdef i64 b
    cdef int a
    cdef const double* ctr = c.center + 3 * cell
    cdef const double* L = c.L + cell * c.n
    cdef double acc
    for b in range(c.bbeg[cell], c.bend[cell]):
        monomials(c, c.pos[3 * b] - ctr[0], c.pos[3 * b + 1] - ctr[1],
                  c.pos[3 * b + 2] - ctr[2], mono, False)
        acc = 0.0
        for a in range(c.n):
            acc = acc + L[a] * mono[a]
        c.phi[b] += acc


cdef void m2l_pair(const Ctx* c, i64 t, i64 s, bint mutual, double* D) noexcept nogil:
    cdef i64 k
    cdef const double* ct = c.center + 3 * t
    cdef const double* cs = c.center + 3 * s
    cdef const double* Ms = c.M + s * c.n
    cdef const double* Mt = c.M + t * c.n
    cdef double* Lt = c.L + t * c.n
    cdef double* Ls = c.L + s * c.n
    dtable(c, cs[0] - ct[0], cs[1] - ct[1], cs[2] - ct[2], D)
    for k in range(c.n_m2l):
        Lt[c.m2l_out[k]] += c.m2l_coef[k] * Ms[c.m2l_in[k]] * D[c.m2l_deriv[k]]
    if mutual:
        for k in range(c.n_m2l):
            Ls[c.m2l_out[k]] += c.m2l_coef_rev[k] * Mt[c.m2l_in[k]] * D[c.m2l_deriv[k]]


cdef i64 p2p_pair(const Ctx* c, i64 t, i64 s, bint mutual) noexcept nogil:
    cdef i64 i, j, j_end
    cdef i64 evals = 0
    cdef double xi, yi, zi, qi, dx, dy, dz, r2, inv, acc
    cdef i64 sb = c.bbeg[s]
    cdef i64 se = c.bend[s]
    for i in range(c.bbeg[t], c.bend[t]):
        xi = c.pos[3 * i]
        yi = c.pos[3 * i + 1]
        zi = c.pos[3 * i + 2]
        qi = c.q[i]
        acc = 0.0
        j_end = i if (mutual and t == s) else se
        for j in range(sb, j_end):
            dx = c.pos[3 * j] - xi
            dy = c.pos[3 * j + 1] - yi
            dz = c.pos[3 * j + 2] - zi
            r2 = dx * dx + dy * dy + dz * dz
            if r2 > 0.0:
                inv = 1.0 / sqrt(r2)
                acc = acc + c.q[j] * inv
                if mutual:
                    c.phi[j] += qi * inv
        if j_end > sb:
            evals += j_end - sb
        c.phi[i] += acc
    return evals


cdef inline bint mac(const Ctx* c, i64 t, i64 s) noexcept nogil:
    cdef double dx = c.center[3 * t] - c.center[3 * s]
    cdef double dy = c.center[3 * t + 1] - c.center[3 * s + 1]
    cdef double dz = c.center[3 * t + 2] - c.center[3 * s + 2]
    cdef double rs = c.rad[t] + c.rad[s]
    return rs * rs < c.theta2 * (dx * dx + dy * dy + dz * dz)


cdef inline bint split_target(const Ctx* c, i64 t, i64 s) noexcept nogil:
    if c.ccnt[t] == 0:
        return False
    if c.ccnt[s] == 0:
        return True
    if c.radius[t] != c.radius[s]:
        return c.radius[t] > c.radius[s]
    return t <= s


cdef inline void record(vector[i64]* rec, i64 kind, i64 t, i64 s) noexcept nogil:
    if rec != NULL:
        rec.push_back(kind)
        rec.push_back(t)
        rec.push_back(s)


# Children pairs go to ``out`` in child order; 0 = kernel applied, 1 = split.
cdef int step(const Ctx* c, i64 t, i64 s, bint mutual, vector[cpair]* out,
              Stats* st, vector[i64]* rec, double* D) noexcept nogil:
    cdef i64 i, j, ib, ie
    if t != s and mac(c, t, s):
        m2l_pair(c, t, s, mutual, D)
        st.m2l += 1
        record(rec, 0, t, s)
        return 0
    if c.ccnt[t] == 0 and c.ccnt[s] == 0:
        st.evals += p2p_pair(c, t, s, mutual)
        st.p2p += 1
        record(rec, 1, t, s)
        return 0
    if mutual and t == s:
        ib = c.cbeg[t]
        ie = ib + c.ccnt[t]
        for i in range(ib, ie):
            for j in range(i, ie):
                out.push_back(cpair(i, j))
    elif split_target(c, t, s):
        ib = c.cbeg[t]
        for i in range(ib, ib + c.ccnt[t]):
            out.push_back(cpair(i, s))
    else:
        ib = c.cbeg[s]
        for j in range(ib, ib + c.ccnt[s]):
            out.push_back(cpair(t, j))
    return 1


cdef void traverse_serial(const Ctx* c, i64 t0, i64 s0, bint mutual, Stats* st,
                          vector[i64]* rec) noexcept nogil:
    cdef vector[cpair] stack
    cdef vector[cpair] kids
    cdef cpair pr
    cdef Py_ssize_t k
    cdef double* D = <double*> malloc(c.n * sizeof(double))
    stack.push_back(cpair(t0, s0))
    while not stack.empty():
        pr = stack.back()
        stack.pop_back()
        kids.clear()
        step(c, pr.first, pr.second, mutual, &kids, st, rec, D)
        # reversed so the first child pair is expanded first
        for k in range(<Py_ssize_t> kids.size() - 1, -1, -1):
            stack.push_back(kids[k])
    free(D)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


cdef class Engine:
    """Binds a tree's arrays and expansion tables for the compiled loops."""

    cdef Ctx ctx
    cdef readonly int p
    cdef readonly double theta
    cdef object _keep
    cdef object tree

    def __init__(self, tree, tables, double theta):
        self.p = tables.p
        self.theta = theta
        self.tree = tree
        t = tables
        bodies = tree.bodies
        for name in ("positions", "charges", "potentials"):
            a = getattr(bodies, name)
            if not (a.flags.c_contiguous and a.dtype == np.float64):
                raise ValueError(f"bodies.{name} must be contiguous float64")
        for a in (tree.multipole, tree.local):
            if not (a.flags.c_contiguous and a.dtype == np.float64):
                raise ValueError("expansion arrays must be contiguous float64")
        axis_exp = t.exps[np.arange(t.n), t.axis].astype(np.float64)
        axis_exp[0] = 1.0
        keep = dict(
            pos=bodies.positions, q=bodies.charges, phi=bodies.potentials,
            center=_f64(tree.center), rad=_f64(tree.radius * sqrt(3.0)),
            radius=_f64(tree.radius),
            bbeg=_i64(tree.body_begin), bend=_i64(tree.body_end),
            cbeg=_i64(tree.child_begin), ccnt=_i64(tree.child_count),
            M=tree.multipole, L=tree.local,
            parent=_i64(np.maximum(t.parent, 0)), axis=_i64(t.axis),
            inv_axis_exp=_f64(1.0 / axis_exp), deg=_i64(t.degree),
            minus1=_i64(t.minus1), minus2=_i64(t.minus2),
            m2m_out=_i64(t.m2m_out), m2m_in=_i64(t.m2m_in), m2m_shift=_i64(t.m2m_shift),
            l2l_out=_i64(t.l2l_out), l2l_in=_i64(t.l2l_in), l2l_shift=_i64(t.l2l_shift),
            l2l_coef=_f64(t.l2l_coef),
            m2l_out=_i64(t.m2l_out), m2l_in=_i64(t.m2l_in), m2l_deriv=_i64(t.m2l_deriv),
            m2l_coef=_f64(t.m2l_coef), m2l_coef_rev=_f64(t.m2l_coef_rev),
        )
        self._keep = keep
        self.ctx.n = t.n
        self.ctx.theta2 = theta * theta
        self.ctx.ncell = tree.n_cells
        self.ctx.pos = _fptr(keep["pos"])
        self.ctx.q = _fptr(keep["q"])
        self.ctx.phi = _fptr(keep["phi"])
        self.ctx.center = _fptr(keep["center"])
        self.ctx.rad = _fptr(keep["rad"])
        self.ctx.radius = _fptr(keep["radius"])
        self.ctx.bbeg = _iptr(keep["bbeg"])
        self.ctx.bend = _iptr(keep["bend"])
        self.ctx.cbeg = _iptr(keep["cbeg"])
        self.ctx.ccnt = _iptr(keep["ccnt"])
        self.ctx.M = _fptr(keep["M"])
        self.ctx.L = _fptr(keep["L"])
        self.ctx.parent = _iptr(keep["parent"])
        self.ctx.axis = _iptr(keep["axis"])
        self.ctx.inv_axis_exp = _fptr(keep["inv_axis_exp"])
        self.ctx.deg = _iptr(keep["deg"])
        self.ctx.minus1 = _iptr(keep["minus1"])
        self.ctx.minus2 = _iptr(keep["minus2"])
        self.ctx.n_m2m = len(keep["m2m_out"])
        self.ctx.m2m_out = _iptr(keep["m2m_out"])
        self.ctx.m2m_in = _iptr(keep["m2m_in"])
        self.ctx.m2m_shift = _iptr(keep["m2m_shift"])
        self.ctx.n_l2l = len(keep["l2l_out"])
        self.ctx.l2l_out = _iptr(keep["l2l_out"])
        self.ctx.l2l_in = _iptr(keep["l2l_in"])
        self.ctx.l2l_shift = _iptr(keep["l2l_shift"])
        self.ctx.l2l_coef = _fptr(keep["l2l_coef"])
        self.ctx.n_m2l = len(keep["m2l_out"])
        self.ctx.m2l_out = _iptr(keep["m2l_out"])
        self.ctx.m2l_in = _iptr(keep["m2l_in"])
        self.ctx.m2l_deriv = _iptr(keep["m2l_deriv"])
        self.ctx.m2l_coef = _fptr(keep["m2l_coef"])
        self.ctx.m2l_coef_rev = _fptr(keep["m2l_coef_rev"])

    def upward(self):
        cdef i64 cell, ch
        cdef Ctx* c = &self.ctx
        cdef double* mono = <double*> malloc(c.n * sizeof(double))
        with nogil:
            for cell in range(c.ncell - 1, -1, -1):
                if c.ccnt[cell] == 0:
                    p2m_cell(c, cell, mono)
                else:
                    for ch in range(c.cbeg[cell], c.cbeg[cell] + c.ccnt[cell]):
                        m2m_cell(c, ch, cell, mono)
        free(mono)

    def downward(self):
        cdef i64 cell, ch
        cdef Ctx* c = &self.ctx
        cdef double* mono = <double*> malloc(c.n * sizeof(double))
        with nogil:
            for cell in range(c.ncell):
                if c.ccnt[cell] == 0:
                    l2p_cell(c, cell, mono)
                else:
                    for ch in range(c.cbeg[cell], c.cbeg[cell] + c.ccnt[cell]):
                        l2l_cell(c, cell, ch, mono)
        free(mono)

    def mac(self, i64 t, i64 s):
        return bool(mac(&self.ctx, t, s))

    def bfs(self, pairs, Py_ssize_t Q, bint mutual, bint record_pairs=False):
        """Breadth-first expansion until the queue holds ``Q`` pairs or empties.

        Returns ``(remaining_pairs, stats, records)``.
        """
        cdef i64[:, ::1] pv = _i64(np.asarray(pairs).reshape(-1, 2))
        cdef deque[cpair] queue
        cdef vector[cpair] kids
        cdef vector[i64] rec
        cdef vector[i64]* recp = &rec if record_pairs else NULL
        cdef Stats st
        cdef cpair pr
        cdef Py_ssize_t k
        cdef Ctx* c = &self.ctx
        cdef double* D = <double*> malloc(c.n * sizeof(double))
        st.m2l = 0
        st.p2p = 0
        st.evals = 0
        for k in range(pv.shape[0]):
            queue.push_back(cpair(pv[k, 0], pv[k, 1]))
        with nogil:
            while not queue.empty() and <Py_ssize_t> queue.size() < Q:
                pr = queue.front()
                queue.pop_front()
                kids.clear()
                step(c, pr.first, pr.second, mutual, &kids, &st, recp, D)
                for k in range(<Py_ssize_t> kids.size()):
                    queue.push_back(kids[k])
        free(D)
        out = np.empty((queue.size(), 2), dtype=np.int64)
        cdef i64[:, ::1] ov = out
        for k in range(<Py_ssize_t> queue.size()):
            ov[k, 0] = queue[k].first
            ov[k, 1] = queue[k].second
        return out, (st.m2l, st.p2p, st.evals), _records(rec)

    def interact(self, i64 t, i64 s, bint mutual, bint record_pairs=False):
        """Serial traversal of one subtree pair with its kernels (GIL released)."""
        cdef vector[i64] rec
        cdef vector[i64]* recp = &rec if record_pairs else NULL
        cdef Stats st
        st.m2l = 0
        st.p2p = 0
        st.evals = 0
        with nogil:
            traverse_serial(&self.ctx, t, s, mutual, &st, recp)
        return (st.m2l, st.p2p, st.evals), _records(rec)


cdef object _records(vector[i64]& rec):
    cdef Py_ssize_t k
    out = np.empty(rec.size(), dtype=np.int64)
    cdef i64[::1] ov = out
    for k in range(<Py_ssize_t> rec.size()):
        ov[k] = rec[k]
    return out.reshape(-1, 3)


cdef double* _fptr(object a) except NULL:
    cdef double[::1] v = a.reshape(-1)
    return &v[0]


cdef i64* _iptr(object a) except NULL:
    cdef i64[::1] v = a.reshape(-1)
    return &v[0]
