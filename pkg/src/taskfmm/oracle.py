"""Direct-summation reference potentials and error metrics."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

_BLOCK = 256


def direct_sum(positions, charges) -> np.ndarray:
    """``phi_i = sum_{j != i} q_j / |x_i - x_j|``, skipping coincident pairs.

    Each row is reduced in extended precision (``np.longdouble``) with a
    fixed reduction order, so the result does not depend on blocking.
    """
    x = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
    q = np.ascontiguousarray(charges, dtype=np.float64).reshape(-1)
    n = len(q)
    out = np.empty(n, dtype=np.float64)
    ql = q.astype(np.longdouble)
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        d = x[lo:hi, None, :] - x[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
        with np.errstate(divide="ignore"):
            inv = np.where(r > 0.0, 1.0 / r, 0.0).astype(np.longdouble)
        out[lo:hi] = (inv * ql).sum(axis=1)
    return out


class ErrorReport(NamedTuple):
    rel_l2: float
    rel_linf: float
    n: int
    absolute: bool = False


def compare(a, b) -> ErrorReport:
    """Error of ``a`` relative to the reference ``b``.

    Falls back to absolute norms (``absolute=True``) when ``b`` is all zero.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    diff = a - b
    l2, linf = float(np.linalg.norm(diff)), float(np.max(np.abs(diff), initial=0.0))
    nb2, nbinf = float(np.linalg.norm(b)), float(np.max(np.abs(b), initial=0.0))
    if nb2 == 0.0:
        return ErrorReport(l2, linf, len(a), absolute=True)
    return ErrorReport(l2 / nb2, linf / nbinf, len(a))
