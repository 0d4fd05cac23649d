"""Cartesian Taylor kernels for the 3-D Laplace potential ``1/|r|``.

Expansions are flat coefficient vectors indexed by multi-indices
``(a, b, c)`` with ``a + b + c <= p - 1``, ordered by ascending degree and
then lexicographically.  Conventions:

* multipole moments ``M[alpha] = sum_j q_j (y_j - c)**alpha / alpha!``
* local coefficients ``L[beta]`` with ``phi(x) ~ sum_beta L[beta] (x - c)**beta``
* derivative table ``D[gamma](R) = d^gamma (1/|R|) / gamma!``

These are the reference implementations.  The compiled backend carries its
own copies of the hot loops and is checked against these.
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np


def n_coef(p: int) -> int:
    """Number of multi-indices of degree at most ``p - 1`` in three variables."""
    if p < 1:
        raise ValueError("expansion order must be >= 1")
    return p * (p + 1) * (p + 2) // 6


def order_from_ncoef(n: int) -> int:
    p = 1
    while n_coef(p) < n:
        p += 1
    if n_coef(p) != n:
        raise ValueError(f"{n} is not a valid expansion length")
    return p


def _mi_factorial(e) -> int:
    return factorial(e[0]) * factorial(e[1]) * factorial(e[2])


class ExpansionTables:
    """Index tables shared by every kernel of a given order.

    Built once per order (see :func:`tables`).  All arrays are plain numpy
    so the compiled backend can take them as memoryviews.
    """

    def __init__(self, p: int):
        self.p = p
        self.n = n_coef(p)
        exps = []
        for deg in range(p):
            for a in range(deg + 1):
                for b in range(deg - a + 1):
                    exps.append((a, b, deg - a - b))
        # lexicographic within a degree: (0,0,1) < (0,1,0) < (1,0,0)
        exps.sort(key=lambda e: (sum(e), e))
        self.exps = np.array(exps, dtype=np.int64).reshape(-1, 3)
        self.degree = self.exps.sum(axis=1)
        self.index = {tuple(int(v) for v in e): i for i, e in enumerate(self.exps)}
        self.fact = np.array([_mi_factorial(e) for e in self.exps], dtype=np.float64)
        self.odd = (self.degree % 2).astype(bool)

        n = self.n
        # monomial recurrence: mono[i] = mono[parent[i]] * x[axis[i]]
        self.parent = np.full(n, -1, dtype=np.int64)
        self.axis = np.zeros(n, dtype=np.int64)
        # derivative recurrence neighbours gamma - e_k and gamma - 2 e_k
        self.minus1 = np.full((n, 3), -1, dtype=np.int64)
        self.minus2 = np.full((n, 3), -1, dtype=np.int64)
        for i, e in enumerate(self.exps):
            e = tuple(int(v) for v in e)
            for k in range(3):
                if e[k] >= 1:
                    f = list(e)
                    f[k] -= 1
                    self.minus1[i, k] = self.index[tuple(f)]
                    if self.parent[i] < 0:
                        self.parent[i] = self.index[tuple(f)]
                        self.axis[i] = k
                if e[k] >= 2:
                    f = list(e)
                    f[k] -= 2
                    self.minus2[i, k] = self.index[tuple(f)]

        # (out, in, shift, coefficient) quadruples for the translation operators
        m2m, l2l, m2l = [], [], []
        for bi, be in enumerate(self.exps):
            for ai, ae in enumerate(self.exps):
                if all(ae[k] <= be[k] for k in range(3)):
                    di = self.index[tuple(int(be[k] - ae[k]) for k in range(3))]
                    m2m.append((bi, ai, di))
                    binom = _mi_factorial(be) // (_mi_factorial(ae) * _mi_factorial(be - ae))
                    # L'[alpha] += L[beta] * C(beta, alpha) * d**(beta - alpha)
                    l2l.append((ai, bi, di, binom))
                g = tuple(int(ae[k] + be[k]) for k in range(3))
                if sum(g) <= p - 1:
                    gi = self.index[g]
                    base = _mi_factorial(g) / _mi_factorial(be)
                    m2l.append((bi, ai, gi, base))
        self.m2m_out, self.m2m_in, self.m2m_shift = (
            np.array(c, dtype=np.int64) for c in zip(*m2m)
        )
        self.l2l_out, self.l2l_in, self.l2l_shift = (
            np.array(c, dtype=np.int64) for c in zip(*[t[:3] for t in l2l])
        )
        self.l2l_coef = np.array([t[3] for t in l2l], dtype=np.float64)
        self.m2l_out, self.m2l_in, self.m2l_deriv = (
            np.array(c, dtype=np.int64) for c in zip(*[t[:3] for t in m2l])
        )
        base = np.array([t[3] for t in m2l], dtype=np.float64)
        sign_out = np.where(self.degree[self.m2l_out] % 2, -1.0, 1.0)
        sign_in = np.where(self.degree[self.m2l_in] % 2, -1.0, 1.0)
        # target <- source uses R = c_s - c_t; the reverse direction reuses
        # the same table with the odd terms flipped on both ends
        self.m2l_coef = base * sign_out
        self.m2l_coef_rev = base * sign_in


@lru_cache(maxsize=None)
def tables(p: int) -> ExpansionTables:
    return ExpansionTables(p)


def monomials(x, p: int, scaled: bool = False) -> np.ndarray:
    """Return ``x**alpha`` (or ``x**alpha / alpha!`` when ``scaled``) for all alpha.

    ``x`` may be a single 3-vector or an ``(m, 3)`` array.
    """
    t = tables(p)
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[:-1] + (t.n,), dtype=np.float64)
    out[..., 0] = 1.0
    for i in range(1, t.n):
        k = t.axis[i]
        v = out[..., t.parent[i]] * x[..., k]
        if scaled:
            v = v / t.exps[i, k]
        out[..., i] = v
    return out


def derivative_table(R, p: int) -> np.ndarray:
    """Scaled derivatives ``d^gamma (1/|R|) / gamma!`` for ``|gamma| <= p - 1``."""
    t = tables(p)
    R = np.asarray(R, dtype=np.float64)
    r2 = float(R @ R)
    if r2 == 0.0:
        raise ValueError("singular M2L displacement")
    D = np.zeros(t.n)
    D[0] = 1.0 / np.sqrt(r2)
    for i in range(1, t.n):
        k = t.degree[i]
        acc = 0.0
        for ax in range(3):
            j = t.minus1[i, ax]
            if j >= 0:
                acc += (2 * k - 1) * R[ax] * D[j]
            j = t.minus2[i, ax]
            if j >= 0:
                acc += (k - 1) * D[j]
        D[i] = -acc / (k * r2)
    return D


def _accumulate(out, contrib, n):
    if out is None:
        return contrib
    if len(out) != n:
        raise ValueError("expansion length mismatch")
    out += contrib
    return out


def p2m(positions, charges, center, p: int, out=None) -> np.ndarray:
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    charges = np.asarray(charges, dtype=np.float64).reshape(-1)
    mono = monomials(positions - np.asarray(center, dtype=np.float64), p, scaled=True)
    return _accumulate(out, charges @ mono, n_coef(p))


def m2m(child, shift, out=None) -> np.ndarray:
    """Shift multipole moments by ``shift = child_center - parent_center``."""
    child = np.asarray(child, dtype=np.float64)
    p = order_from_ncoef(len(child))
    t = tables(p)
    mono = monomials(shift, p, scaled=True)
    contrib = np.bincount(
        t.m2m_out, weights=child[t.m2m_in] * mono[t.m2m_shift], minlength=t.n
    )
    return _accumulate(out, contrib, t.n)


def m2l(source, displacement, out=None, reverse: bool = False) -> np.ndarray:
    """Multipole-to-local, ``displacement = source_center - target_center``.

    With ``reverse`` the same displacement produces the target-to-source
    translation (used by mutual interactions).
    """
    source = np.asarray(source, dtype=np.float64)
    p = order_from_ncoef(len(source))
    t = tables(p)
    D = derivative_table(displacement, p)
    coef = t.m2l_coef_rev if reverse else t.m2l_coef
    contrib = np.bincount(
        t.m2l_out, weights=coef * source[t.m2l_in] * D[t.m2l_deriv], minlength=t.n
    )
    return _accumulate(out, contrib, t.n)


def l2l(parent, shift, out=None) -> np.ndarray:
    """Re-center a local expansion, ``shift = child_center - parent_center``."""
    parent = np.asarray(parent, dtype=np.float64)
    p = order_from_ncoef(len(parent))
    t = tables(p)
    mono = monomials(shift, p)
    contrib = np.bincount(
        t.l2l_out,
        weights=t.l2l_coef * parent[t.l2l_in] * mono[t.l2l_shift],
        minlength=t.n,
    )
    return _accumulate(out, contrib, t.n)


def l2p(local, positions, center, potentials=None) -> np.ndarray:
    local = np.asarray(local, dtype=np.float64)
    p = order_from_ncoef(len(local))
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    mono = monomials(positions - np.asarray(center, dtype=np.float64), p)
    contrib = mono @ local
    if potentials is None:
        return contrib
    potentials += contrib
    return potentials


def p2p(target_pos, target_phi, source_pos, source_q, mutual=False,
        target_q=None, source_phi=None, self_pair=False) -> int:
    """Direct interaction between two body slices, accumulating in place.

    Zero-distance pairs are skipped.  In mutual mode ``target_q`` and
    ``source_phi`` are required; a self pair then visits only ``j < i``.
    Returns the number of inner-loop evaluations.
    """
    tx = np.asarray(target_pos, dtype=np.float64)
    sx = np.asarray(source_pos, dtype=np.float64)
    nt, ns = len(tx), len(sx)
    if mutual and (target_q is None or source_phi is None):
        raise ValueError("mutual p2p needs target charges and source potentials")
    evals = 0
    for i in range(nt):
        hi = i if (mutual and self_pair) else ns
        if hi == 0:
            continue
        d = sx[:hi] - tx[i]
        r = np.sqrt(np.einsum("ij,ij->i", d, d))
        safe = r > 0.0
        inv = np.zeros(hi)
        inv[safe] = 1.0 / r[safe]
        target_phi[i] += float(inv @ source_q[:hi])
        if mutual:
            source_phi[:hi] += target_q[i] * inv
        evals += hi
    return evals


def evaluate_multipole(M, x, center) -> float:
    """Far-field value of a multipole expansion at ``x``."""
    M = np.asarray(M, dtype=np.float64)
    p = order_from_ncoef(len(M))
    t = tables(p)
    X = np.asarray(x, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    if not np.any(X):
        raise ValueError("singular evaluation point")
    D = derivative_table(X, p)
    sign = np.where(t.odd, -1.0, 1.0)
    return float(np.sum(sign * t.fact * M * D))


def m2p_flip(M) -> np.ndarray:
    """Negate the odd-degree coefficients."""
    M = np.asarray(M, dtype=np.float64)
    t = tables(order_from_ncoef(len(M)))
    return np.where(t.odd, -M, M)
