import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from mixedelast.experiments import Manufactured
from mixedelast.material import InadmissibleState, NeoHookean

MAT = NeoHookean(80.194, 400.0)


def admissible(rng, n, size, scale=0.3):
    K = scale * rng.standard_normal((size, n, n))
    return K[np.linalg.det(np.eye(n) + K) > 0.2]


@pytest.mark.parametrize("n", [2, 3])
def test_stress_matches_symbolic_derivative(n):
    mu, lam = sp.Rational(3, 2), sp.Rational(7, 3)
    Ks = sp.Matrix(n, n, lambda i, j: sp.Symbol(f"k{i}{j}"))
    F = sp.eye(n) + Ks
    lnI3 = 2 * sp.log(F.det())
    W = mu / 2 * (sum(F[i, j] ** 2 for i in range(n) for j in range(n)) - n) - mu / 2 * lnI3 \
        + lam / 2 * lnI3 ** 2
    rng = np.random.default_rng(0)
    mat = NeoHookean(1.5, 7 / 3)
    for K in admissible(rng, n, 5):
        subs = {Ks[i, j]: K[i, j] for i in range(n) for j in range(n)}
        P = np.array([[float(sp.diff(W, Ks[i, j]).subs(subs)) for j in range(n)] for i in range(n)])
        assert_allclose(mat.stress(K), P, rtol=1e-12, atol=1e-12)
        assert_allclose(mat.energy(K), float(W.subs(subs)), rtol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_manufactured_body_force_symbolic(n):
    X = sp.symbols("x0:%d" % n)
    f = sp.Rational(1, 2) * X[1] ** 3 + sp.Rational(1, 2) * sp.sin(sp.pi * X[1] / 2)
    U = sp.Matrix([f] + [0] * (n - 1))
    K = U.jacobian(X)
    F = sp.eye(n) + K
    mu, lam = 1, 1
    P = mu * F + (2 * lam * sp.log(F.det() ** 2) - mu) * F.inv().T
    B = -sp.Matrix([sum(sp.diff(P[i, j], X[j]) for j in range(n)) for i in range(n)])
    ex = Manufactured(n)
    pts = np.random.default_rng(1).random((6, n))
    Bf = sp.lambdify(X, B, "numpy")
    Pf = sp.lambdify(X, P, "numpy")
    Kf = sp.lambdify(X, K, "numpy")
    for x in pts:
        assert_allclose(ex.B(x[None])[0], np.array(Bf(*x), dtype=float).ravel(), atol=1e-12)
        assert_allclose(ex.P(x[None])[0], np.array(Pf(*x), dtype=float), atol=1e-12)
        assert_allclose(ex.K(x[None])[0], np.array(Kf(*x), dtype=float), atol=1e-12)
    assert_allclose(NeoHookean(1, 1).stress(ex.K(pts)), ex.P(pts), atol=1e-12)


def test_stress_free_reference_state():
    for n in (2, 3):
        assert np.array_equal(MAT.stress(np.zeros((n, n))), np.zeros((n, n)))
        assert MAT.energy(np.zeros((n, n))) == 0.0


@pytest.mark.parametrize("n", [2, 3])
def test_tangent_apply_matches_fourth_order_tensor(n):
    rng = np.random.default_rng(2)
    K = admissible(rng, n, 10)
    M = rng.standard_normal(K.shape)
    A = MAT.tangent(K)
    assert_allclose(MAT.tangent_apply(K, M), np.einsum("cIJRS,cRS->cIJ", A, M), rtol=1e-12,
                    atol=1e-9)


def test_linearization_at_reference_is_isotropic_elasticity():
    n = 3
    A = MAT.tangent(np.zeros((n, n)))
    eps = np.random.default_rng(3).standard_normal((n, n))
    sym = 0.5 * (eps + eps.T)
    # small strain: sigma = 2 mu eps + lam' tr(eps) I, with lam' = 4 lam
    expect = 2 * MAT.mu * sym + 4 * MAT.lam * np.trace(sym) * np.eye(n)
    assert_allclose(np.einsum("IJRS,RS->IJ", A, sym), expect, rtol=1e-12, atol=1e-9)


def test_inadmissible_states_raise():
    with pytest.raises(InadmissibleState):
        MAT.stress(np.array([[-2.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(InadmissibleState), np.errstate(invalid="ignore"):
        MAT.stress(np.full((2, 2), np.nan))


def test_log_jacobian_accurate_for_tiny_strains():
    K = np.diag([1e-13, 0.0])
    # P_00 = mu (1 + k) + (4 lam ln(1 + k) - mu) / (1 + k) ~ (2 mu + 4 lam) k
    # remaining error is the mu F - mu F^{-T} cancellation, about mu * eps
    assert_allclose(MAT.stress(K)[0, 0], (2 * MAT.mu + 4 * MAT.lam) * 1e-13, rtol=1e-4)


def test_parameters_validated():
    with pytest.raises(ValueError):
        NeoHookean(0.0, 1.0)
    m = NeoHookean.from_engineering(1000.0, 0.3)
    assert_allclose(m.mu, 1000 / 2.6)
    assert_allclose(m.lam, 1000 * 0.3 / (1.3 * 0.4))


small = arrays(np.float64, (3, 3), elements=st.floats(-0.25, 0.25))


@settings(max_examples=60, deadline=None)
@given(small)
def test_major_symmetry_of_tangent(K):
    A = MAT.tangent(K)
    assert_allclose(A, np.transpose(A, (2, 3, 0, 1)), rtol=1e-10, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(small, st.floats(0, 2 * np.pi), st.floats(0, np.pi))
def test_frame_indifference(K, a, b):
    Qz = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])
    Qx = np.array([[1, 0, 0], [0, np.cos(b), -np.sin(b)], [0, np.sin(b), np.cos(b)]])
    Q = Qz @ Qx
    F = np.eye(3) + K
    KQ = Q @ F - np.eye(3)
    assert_allclose(MAT.energy(KQ), MAT.energy(K), rtol=1e-9, atol=1e-9)
    assert_allclose(MAT.stress(KQ), Q @ MAT.stress(K), rtol=1e-9, atol=1e-7)
