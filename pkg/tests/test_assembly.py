import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from mixedelast.assembly import (DirichletBC, LoadCase, MixedProblem, apply_dirichlet,
                                 assemble_metrics, assemble_residual, assemble_tangent)
from mixedelast.material import NeoHookean
from mixedelast.mesh import cook2d, perturbed, structured_cube, structured_square


def smooth_state(pb, rng, amp=0.1):
    """Random u and p with a smooth, admissible displacement gradient."""
    S = pb.space
    n = pb.n
    A = amp * rng.standard_normal((n, n))
    B = amp * rng.standard_normal((n, n))
    k = S.K.interpolate(lambda x: A[None] + B[None] * np.sin(x)[:, :, None])
    return S.join(rng.standard_normal(S.U.dim), k, rng.standard_normal(S.P.dim))


def fd_tangent_error(pb, x, rng, eps=1e-6):
    """Relative error of the assembled tangent against central differences."""
    J = assemble_tangent(pb, x).matrix()
    worst = 0.0
    for _ in range(3):
        dx = rng.standard_normal(len(x)) * 1e-2
        fd = (assemble_residual(pb, x + eps * dx) - assemble_residual(pb, x - eps * dx)) / (2 * eps)
        worst = max(worst, np.linalg.norm(J @ dx - fd) / np.linalg.norm(fd))
    return worst


@pytest.mark.parametrize("label", ["L1N11R1", "L2N22B2", "L1N21B2"])
def test_tangent_matches_residual_differences_2d(label, rng):
    pb = MixedProblem(perturbed(structured_square(3), 0.2, seed=1), label, NeoHookean(1.0, 3.0))
    x = smooth_state(pb, rng)
    assert fd_tangent_error(pb, x, rng) < 1e-7


def test_tangent_matches_residual_differences_3d(rng):
    pb = MixedProblem(structured_cube(1), "L1N12B1", NeoHookean(1.0, 3.0))
    x = smooth_state(pb, rng)
    assert fd_tangent_error(pb, x, rng) < 1e-7


def test_reference_state_is_equilibrium():
    pb = MixedProblem(structured_square(2), "L1N11R1", NeoHookean(1, 1))
    assert np.array_equal(pb.residual(np.zeros(pb.space.dim)), np.zeros(pb.space.dim))


def test_traction_resultant():
    f = 24.0
    pb = MixedProblem(cook2d(4), "L2N22B2", NeoHookean(1, 1),
                      LoadCase(None, {"gamma2:tip": (0.0, f)}, [DirichletBC(("gamma1",))]))
    load = pb.external_load()
    V = pb.space.U
    # Lagrange basis is a partition of unity: the sum of nodal loads is the resultant
    assert_allclose(load[:V.n_scalar].sum(), 0.0, atol=1e-12)
    assert_allclose(load[V.n_scalar:].sum(), f * 16.0, rtol=1e-12)
    assert_allclose(pb.external_load(0.5), 0.5 * load)


def test_body_force_resultant():
    pb = MixedProblem(structured_square(3), "L2N11R1", NeoHookean(1, 1),
                      LoadCase(lambda x: np.stack([x[:, 1], np.ones(len(x))], axis=1)))
    load = pb.external_load()
    n = pb.space.U.n_scalar
    assert_allclose([load[:n].sum(), load[n:].sum()], [0.5, 1.0], rtol=1e-12)


def test_traction_on_interior_or_missing_tag_rejected():
    mesh = structured_square(2)
    with pytest.raises(ValueError):
        MixedProblem(mesh, "L1N11R1", NeoHookean(1, 1), LoadCase(None, {"nope": (1, 0)})).external_load()


def test_dirichlet_values_and_components():
    g = lambda x: np.stack([x[:, 0], -x[:, 1]], axis=1)  # noqa: E731
    pb = MixedProblem(structured_square(2), "L1N11R1", NeoHookean(1, 1),
                      LoadCase(None, {}, [DirichletBC(("gamma1",), g, components=(1,))]))
    V = pb.space.U
    assert np.all(pb.constrained >= V.n_scalar)
    vals = pb.dirichlet_values(2.0)
    coords = V.dof_coordinates()
    idx = pb.constrained - V.n_scalar
    assert_allclose(vals[pb.constrained], -2.0 * coords[idx, 1])
    assert len(pb.free) + len(pb.constrained) == pb.space.dim


def test_metric_matrices_spd():
    m = assemble_metrics(MixedProblem(structured_square(2), "L1N12B2", NeoHookean(1, 1)))
    for D in (m.D1, m.Dc, m.Dd):
        A = D.toarray()
        assert_allclose(A, A.T, atol=1e-14)
        assert np.linalg.eigvalsh(A).min() > 0
    assert m.matrix().shape[0] == sum(D.shape[0] for D in (m.D1, m.Dc, m.Dd))


def test_linear_block_structure():
    pb = MixedProblem(structured_square(2), "L1N11R1", NeoHookean(1, 1))
    t = assemble_tangent(pb, np.zeros(pb.space.dim))
    n1, nc, nd = pb.space.sizes
    assert t.S1d.shape == (n1, nd) and t.Sc1.shape == (nc, n1) and t.Sdc.shape == (nd, nc)
    # Scc and Sdd are negative mass matrices
    assert np.linalg.eigvalsh(t.Scc.toarray()).max() < 0
    assert np.linalg.eigvalsh(t.Sdd.toarray()).max() < 0
    # rigid translations are in the kernel of S1d^T (div of the basis integrates against constants)
    ones = np.zeros(n1)
    ones[: n1 // 2] = 1.0
    assert_allclose(t.Sc1 @ ones, 0.0, atol=1e-12)


def test_apply_dirichlet_lifts_values():
    A = sp.csr_matrix(np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]]))
    b = np.array([1.0, 2.0, 3.0])
    Aff, bf, free = apply_dirichlet(A, b, [0], np.array([5.0, 0.0, 0.0]))
    assert_allclose(free, [1, 2])
    assert_allclose(Aff.toarray(), [[3.0, 1.0], [1.0, 4.0]])
    assert_allclose(bf, [2.0 - 5.0, 3.0])


def test_quadrature_degree_override():
    pb = MixedProblem(structured_square(2), "L1N11R1", NeoHookean(1, 1), quad_degree=6)
    assert pb.quad_degree == 6
