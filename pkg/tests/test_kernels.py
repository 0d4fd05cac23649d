from math import factorial

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskfmm import kernels as K


def direct(targets, sources, q):
    d = targets[:, None, :] - sources[None, :, :]
    return (q[None, :] / np.sqrt((d ** 2).sum(-1))).sum(1)


def test_n_coef():
    assert K.n_coef(1) == 1
    assert K.n_coef(2) == 4
    assert K.n_coef(6) == 6 * 7 * 8 // 6 == 56
    with pytest.raises(ValueError):
        K.n_coef(0)


def test_multi_index_order():
    t = K.tables(3)
    assert [tuple(e) for e in t.exps[:4]] == [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0)]
    assert list(t.degree) == sorted(t.degree)
    assert len(t.exps) == K.n_coef(3)


@pytest.mark.parametrize("p", [2, 3, 4])
def test_derivative_table_matches_mpmath_differences(p):
    order = 2 * (p - 1)
    rng = np.random.default_rng(p)
    mpmath.mp.dps = 40
    f = lambda x, y, z: 1 / mpmath.sqrt(x * x + y * y + z * z)  # noqa: E731
    t = K.tables(order + 1)
    for _ in range(3):
        R = rng.uniform(-1.5, 1.5, 3)
        R[np.abs(R) < 0.2] += 0.5
        D = K.derivative_table(R, order + 1)
        for i, e in enumerate(t.exps):
            a, b, c = (int(v) for v in e)
            ref = float(mpmath.diff(f, tuple(float(v) for v in R), (a, b, c)))
            ref /= factorial(a) * factorial(b) * factorial(c)
            assert D[i] == pytest.approx(ref, rel=1e-5, abs=1e-12)


@pytest.mark.parametrize("p", [3, 5, 8])
def test_derivative_table_is_harmonic(p):
    t = K.tables(p)
    R = np.array([0.4, -1.1, 0.7])
    D = K.derivative_table(R, p)
    scale = np.abs(D).max()
    for e in t.exps:
        if e.sum() > p - 3:
            continue
        total = 0.0
        for k in range(3):
            g = e.copy()
            g[k] += 2
            total += (e[k] + 1) * (e[k] + 2) * D[t.index[tuple(int(v) for v in g)]]
        assert abs(total) <= 1e-10 * scale


def test_p2m_single_body_at_center():
    M = K.p2m([[0.1, 0.2, 0.3]], [2.0], [0.1, 0.2, 0.3], 4)
    assert M[0] == 2.0
    assert np.all(M[1:] == 0.0)


def test_p2m_symmetric_dipole():
    off = np.array([0.1, -0.2, 0.05])
    M = K.p2m([off, -off], [1.0, -1.0], np.zeros(3), 3)
    assert M[0] == 0.0
    t = K.tables(3)
    for k in range(3):
        e = [0, 0, 0]
        e[k] = 1
        assert M[t.index[tuple(e)]] == pytest.approx(2 * off[k])


def test_p2m_far_field_accuracy():
    rng = np.random.default_rng(0)
    r = 0.5
    y = rng.uniform(-r, r, (50, 3))
    q = rng.uniform(0, 1, 50)
    M = K.p2m(y, q, np.zeros(3), 4)
    a = r * np.sqrt(3)  # circumscribed radius
    for _ in range(5):
        u = rng.normal(size=3)
        x = 10 * a * u / np.linalg.norm(u)
        ref = direct(x[None], y, q)[0]
        assert abs(K.evaluate_multipole(M, x, np.zeros(3)) - ref) <= 0.1 ** 4 * abs(ref)


def test_m2m_identity_and_monopole():
    rng = np.random.default_rng(1)
    M = rng.normal(size=K.n_coef(5))
    assert np.array_equal(K.m2m(M, np.zeros(3)), M)
    q, d = 1.7, np.array([0.3, -0.1, 0.25])
    mono = np.zeros(K.n_coef(5))
    mono[0] = q
    t = K.tables(5)
    ref = [q * np.prod(d ** e) / t.fact[i] for i, e in enumerate(t.exps)]
    assert np.allclose(K.m2m(mono, d), ref, rtol=1e-14, atol=0)


def test_m2m_equals_p2m_about_parent():
    rng = np.random.default_rng(2)
    y = rng.uniform(-0.25, 0.25, (40, 3))
    q = rng.uniform(-1, 1, 40)
    child_c = np.array([0.25, -0.25, 0.25])
    parent_c = np.zeros(3)
    Mc = K.p2m(y + child_c, q, child_c, 5)
    got = K.m2m(Mc, child_c - parent_c)
    ref = K.p2m(y + child_c, q, parent_c, 5)
    assert np.linalg.norm(got - ref) <= 1e-12 * np.linalg.norm(ref)


def test_m2l_monopole():
    M = np.zeros(K.n_coef(4))
    M[0] = 3.0
    L = K.m2l(M, np.array([0.0, 2.0, 0.0]))
    assert L[0] == pytest.approx(1.5)
    L1 = K.m2l(np.array([3.0]), np.array([1.0, 1.0, 1.0]))
    assert L1[0] == pytest.approx(3.0 / np.sqrt(3.0))


def test_m2l_singular():
    with pytest.raises(ValueError, match="singular M2L displacement"):
        K.m2l(np.ones(4), np.zeros(3))


def test_m2l_against_direct():
    rng = np.random.default_rng(3)
    half = 0.5
    a = half * np.sqrt(3)
    cs = np.zeros(3)
    ct = np.array([6 * a, 0.0, 0.0])  # three diameters between centers
    ratio = 2 * a / np.linalg.norm(ct - cs)
    y = rng.uniform(-half, half, (60, 3))
    q = rng.uniform(-1, 1, 60)
    x = ct + rng.uniform(-half, half, (30, 3))
    L = K.m2l(K.p2m(y, q, cs, 6), cs - ct)
    phi = K.l2p(L, x, ct)
    ref = direct(x, y, q)
    assert np.abs(phi - ref).max() <= ratio ** 6 * 10 * np.abs(ref).max()


def test_m2l_reverse_is_flipped_forward():
    rng = np.random.default_rng(4)
    M = rng.normal(size=K.n_coef(6))
    R = np.array([1.2, -0.4, 2.0])
    rev = K.m2l(M, R, reverse=True)
    assert np.allclose(rev, K.m2p_flip(K.m2l(K.m2p_flip(M), R)), rtol=1e-14, atol=0)
    assert np.allclose(rev, K.m2l(M, -R), rtol=1e-12, atol=1e-15)


def test_l2l_identity_and_constant():
    rng = np.random.default_rng(5)
    L = rng.normal(size=K.n_coef(5))
    assert np.array_equal(K.l2l(L, np.zeros(3)), L)
    c = np.zeros(K.n_coef(5))
    c[0] = 2.5
    assert np.array_equal(K.l2l(c, np.array([0.3, 0.1, -0.2])), c)


def _poly(L, x, p):
    t = K.tables(p)
    return sum(L[i] * np.prod(x ** e, axis=-1) for i, e in enumerate(t.exps))


def test_l2l_polynomial_identity():
    rng = np.random.default_rng(6)
    L = rng.normal(size=K.n_coef(5))
    d = np.array([0.2, -0.3, 0.15])
    child = K.l2l(L, d)
    x = rng.uniform(-0.5, 0.5, (20, 3))
    parent_val = _poly(L, x + d, 5)
    child_val = _poly(child, x, 5)
    assert np.allclose(child_val, parent_val, rtol=1e-12, atol=1e-12)


def test_l2p():
    rng = np.random.default_rng(7)
    c = np.array([0.1, 0.2, 0.3])
    const = np.zeros(K.n_coef(4))
    const[0] = 1.25
    assert np.array_equal(K.l2p(const, rng.uniform(size=(5, 3)), c), np.full(5, 1.25))
    L = rng.normal(size=K.n_coef(4))
    assert K.l2p(L, c[None], c)[0] == L[0]
    x = rng.uniform(-0.5, 0.5, (10, 3))
    assert np.allclose(K.l2p(L, x + c, c), _poly(L, x, 4), rtol=1e-13, atol=1e-13)


def test_p2p_pair_and_single():
    x = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    q = np.ones(2)
    phi = np.zeros(2)
    K.p2p(x, phi, x, q)
    assert np.array_equal(phi, [1.0, 1.0])
    one = np.zeros(1)
    K.p2p(x[:1], one, x[:1], q[:1])
    assert one[0] == 0.0


def test_p2p_mutual_matches_non_mutual():
    rng = np.random.default_rng(8)
    x = rng.uniform(size=(20, 3))
    q = rng.uniform(-1, 1, 20)
    a = np.zeros(20)
    n_evals = K.p2p(x, a, x, q)
    b = np.zeros(20)
    m_evals = K.p2p(x, b, x, q, mutual=True, target_q=q, source_phi=b, self_pair=True)
    assert np.allclose(a, b, rtol=1e-12, atol=0)
    assert n_evals == 400 and m_evals == 190


def test_p2p_coincident_distinct_bodies_skip():
    x = np.zeros((2, 3))
    phi = np.zeros(2)
    K.p2p(x, phi, x, np.ones(2))
    assert np.array_equal(phi, [0.0, 0.0])


def test_evaluate_multipole():
    M = np.zeros(K.n_coef(3))
    M[0] = 2.0
    assert K.evaluate_multipole(M, [0, 3.0, 4.0], [0, 0, 0]) == pytest.approx(0.4)
    assert K.evaluate_multipole(np.zeros(4), [1.0, 0, 0], [0, 0, 0]) == 0.0
    with pytest.raises(ValueError, match="singular evaluation point"):
        K.evaluate_multipole(M, [1.0, 1, 1], [1.0, 1, 1])


def test_evaluate_multipole_random_leaf():
    rng = np.random.default_rng(9)
    a = 0.5 * np.sqrt(3)
    y = rng.uniform(-0.5, 0.5, (40, 3))
    q = rng.uniform(-1, 1, 40)
    M = K.p2m(y, q, np.zeros(3), 6)
    x = np.array([5 * a, 0, 0])
    ref = direct(x[None], y, q)[0]
    assert abs(K.evaluate_multipole(M, x, np.zeros(3)) - ref) <= 0.2 ** 6 * 10 * abs(ref)


def test_m2p_flip():
    t = K.tables(3)
    mono = np.zeros(t.n)
    mono[0] = 4.0
    assert np.array_equal(K.m2p_flip(mono), mono)
    dip = np.zeros(t.n)
    dip[1:4] = [1.0, -2.0, 3.0]
    assert np.array_equal(K.m2p_flip(dip), -dip)


@given(st.lists(st.floats(-1e3, 1e3), min_size=10, max_size=10))
def test_m2p_flip_involution(vals):
    M = np.array(vals)
    assert np.array_equal(K.m2p_flip(K.m2p_flip(M)), M)


def test_convergence_in_p():
    rng = np.random.default_rng(10)
    half = 0.5
    y = rng.uniform(-half, half, (40, 3))
    q = rng.uniform(-1, 1, 40)
    ct = np.array([3.0, 1.0, 0.5])
    x = ct + rng.uniform(-half, half, (20, 3))
    ref = direct(x, y, q)
    errs = []
    for p in (2, 4, 6, 8):
        L = K.m2l(K.p2m(y, q, np.zeros(3), p), -ct)
        errs.append(np.linalg.norm(K.l2p(L, x, ct) - ref))
    assert all(a > b for a, b in zip(errs, errs[1:]))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_kernels_only_touch_their_target(p, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=K.n_coef(p))
    keep = M.copy()
    out = np.zeros_like(M)
    K.m2l(M, np.array([3.0, 0.5, -1.0]), out=out)
    K.m2m(M, np.array([0.1, 0.2, 0.3]), out=out)
    K.l2l(M, np.array([0.1, 0.2, 0.3]), out=out)
    assert np.array_equal(M, keep)
