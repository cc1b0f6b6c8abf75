import numpy as np
from numpy.testing import assert_allclose

from mixedelast.assembly import MixedProblem
from mixedelast.material import NeoHookean
from mixedelast.mesh import cook2d, structured_cube
from mixedelast.spaces import MixedSpace
from mixedelast.vtk import export_vtk, read_vtk, sample_state


def test_zero_state(tmp_path):
    S = MixedSpace(cook2d(2), "L2N22B2")
    data = read_vtk(export_vtk(S, np.zeros(S.dim), tmp_path / "z.vtk"))
    assert np.all(data["P_frobenius"] == 0) and np.all(data["U"] == 0)
    assert set(data["cell_types"]) == {5}
    assert_allclose(data["points"][:, :2], S.mesh.vertices)
    assert np.array_equal(data["cells"], S.mesh.cells)


def test_fields_roundtrip_3d(tmp_path):
    S = MixedSpace(structured_cube(1), "L1N11R1")
    u = S.U.interpolate(lambda x: np.stack([x[:, 1], 0 * x[:, 0], x[:, 0] * 2], axis=1))
    P = np.array([[1.0, 2.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 4.0]])
    p = S.P.interpolate(lambda x: np.broadcast_to(P, (len(x), 3, 3)))
    x = S.join(u, np.zeros(S.K.dim), p)
    data = read_vtk(export_vtk(S, x, tmp_path / "s.vtk"))
    assert set(data["cell_types"]) == {10}
    v = S.mesh.vertices
    assert_allclose(data["U"], np.stack([v[:, 1], 0 * v[:, 0], 2 * v[:, 0]], axis=1), atol=1e-12)
    assert_allclose(data["P"], np.broadcast_to(P, data["P"].shape), atol=1e-12)
    assert_allclose(data["P_frobenius"], np.sqrt(30.0))


def test_sample_state_shapes():
    pb = MixedProblem(cook2d(2), "L1N11R1", NeoHookean(1, 1))
    U, K, P, Pf = sample_state(pb.space, np.zeros(pb.space.dim))
    assert U.shape == (9, 2) and K.shape == (8, 2, 2) and P.shape == (8, 2, 2) and Pf.shape == (8,)


def test_header_is_legacy_vtk(tmp_path):
    S = MixedSpace(cook2d(1), "L1N11R1")
    text = export_vtk(S, np.zeros(S.dim), tmp_path / "h.vtk").read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 3.0"
    assert text[2:4] == ["ASCII", "DATASET UNSTRUCTURED_GRID"]
    assert "CELLS 2 8" in text
