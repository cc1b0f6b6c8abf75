import numpy as np
import pytest
from numpy.testing import assert_allclose

from mixedelast import mesh as M


@pytest.mark.parametrize("m", [1, 2, 5])
def test_structured_square_counts(m):
    mesh = M.structured_square(m)
    s = mesh.stats()
    assert (s.N_v, s.N_e) == ((m + 1) ** 2, 2 * m * m)
    assert mesh.euler_characteristic() == 1
    assert_allclose(mesh.cell_volumes().sum(), 1.0)
    assert_allclose(s.h, np.sqrt(2) / m)


def test_structured_cube_is_kuhn_subdivision():
    mesh = M.structured_cube(3)
    assert len(mesh.cells) == 6 * 27
    assert mesh.euler_characteristic() == 1
    assert_allclose(mesh.cell_volumes().sum(), 1.0)
    assert len(mesh.boundary_facets) == 6 * 2 * 9


def test_negative_cells_are_reoriented():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = M.Mesh(verts, np.array([[0, 2, 1]]))
    assert mesh.cell_volumes()[0] > 0


@pytest.mark.parametrize("cells", [np.array([[0, 1, 1]]), np.array([[0, 1, 5]]), np.array([[0, 1]])])
def test_invalid_meshes_rejected(cells):
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(M.MeshError):
        M.Mesh(verts, cells)


def test_facet_cells_and_normals():
    mesh = M.structured_square(2)
    fc = mesh.facet_cells
    interior = fc[:, 1] >= 0
    assert interior.sum() == len(mesh.facets) - len(mesh.boundary_facets)
    for f in mesh.boundary_facets:
        n = mesh.facet_normal(f)
        mid = mesh.vertices[mesh.facets[f]].mean(axis=0)
        centre = mesh.vertices[mesh.cells[fc[f, 0]]].mean(axis=0)
        assert np.dot(n, mid - centre) > 0
        assert_allclose(np.linalg.norm(n), 1.0)


def test_cook_geometry_and_tags():
    mesh = M.cook2d(4)
    assert_allclose(mesh.cell_volumes().sum(), 0.5 * (44 + 16) * 48)
    clamp = mesh.vertices[np.unique(mesh.facets[mesh.tagged("gamma1")])]
    tip = mesh.vertices[np.unique(mesh.facets[mesh.tagged("gamma2:tip")])]
    assert_allclose(clamp[:, 0], 0.0)
    assert_allclose(tip[:, 0], 48.0)
    assert len(mesh.tagged("gamma2")) == len(mesh.boundary_facets) - len(mesh.tagged("gamma1"))


def test_cook3d_volume():
    mesh = M.cook3d(2, thickness=10.0)
    assert mesh.dim == 3
    assert_allclose(mesh.cell_volumes().sum(), 0.5 * (44 + 16) * 48 * 10)


def test_compression_tags():
    mesh = M.compression2d(8, 4)
    load = mesh.vertices[np.unique(mesh.facets[mesh.tagged("gamma2:load")])]
    assert load[:, 0].min() >= 5.0 - 1e-12 and load[:, 0].max() <= 15.0 + 1e-12
    assert_allclose(load[:, 1], 10.0)
    assert len(mesh.tagged("bottom")) == 8


def test_benchmark_geometry_dispatch():
    assert M.benchmark_geometry("cook2d", nx=2).stats().N_e == 8
    with pytest.raises(ValueError):
        M.benchmark_geometry("nope")


def test_perturbed_keeps_boundary_and_orientation():
    base = M.structured_square(6)
    mesh = M.perturbed(base, 0.3, seed=3)
    assert np.all(mesh.cell_volumes() > 0)
    bnd = np.unique(base.facets[base.boundary_facets])
    on_edge = (np.abs(base.vertices[bnd]) < 1e-12) | (np.abs(base.vertices[bnd] - 1) < 1e-12)
    assert_allclose(mesh.vertices[bnd][on_edge], base.vertices[bnd][on_edge])
    assert_allclose(mesh.cell_volumes().sum(), 1.0)


def test_mesh_file_roundtrip(tmp_path):
    mesh = M.cook2d(3)
    M.write_mesh(mesh, tmp_path / "c.msh")
    back = M.read_mesh(tmp_path / "c.msh")
    assert_allclose(back.vertices, mesh.vertices)
    assert np.array_equal(back.cells, mesh.cells)
    assert set(back.tags) == set(mesh.tags)
    for k in mesh.tags:
        assert np.array_equal(back.tags[k], mesh.tags[k])


def test_read_mesh_errors(tmp_path):
    p = tmp_path / "bad.msh"
    p.write_text("2 3 1\n0 0\n1 0\n0 1\n0 1 2\n")
    with pytest.raises(M.MeshError):
        M.read_mesh(p)


def test_scaled():
    mesh = M.structured_square(2).scaled(3.0)
    assert_allclose(mesh.cell_volumes().sum(), 9.0)
