"""Global finite element spaces on a mesh, tensorized row-wise.

A tensorized space holds ``ncopies`` independent copies of a scalar-basis
space.  Copy ``I`` of basis function ``j`` is ``e_I (x) phi_j`` and has the
global index ``I * n_scalar + j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .elements import (CellGeometry, ElementTriple, local_edges, local_faces, pull_back,
                       push_forward, reference_element)
from .mesh import Mesh
from .quadrature import quadrature_rule


def _entity_lookup(rows):
    return {tuple(r): i for i, r in enumerate(rows.tolist())}


@dataclass(eq=False)
class FunctionSpace:
    mesh: Mesh
    family: str
    degree: int
    ncopies: int = 1
    _tab_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.element = reference_element(self.family, self.degree, self.mesh.dim)
        self._build_dofmap()

    # -- numbering -----------------------------------------------------------

    @cached_property
    def sorted_cells(self):
        return np.sort(self.mesh.cells, axis=1)

    @cached_property
    def geometry(self):
        return CellGeometry.from_vertices(self.mesh.vertices[self.sorted_cells])

    def _build_dofmap(self):
        mesh, el = self.mesh, self.element
        dim = mesh.dim
        cells = self.sorted_cells
        C = len(cells)
        counts = {0: len(mesh.vertices), 1: len(mesh.edges)}
        if dim == 3:
            counts[2] = len(mesh.faces)
            counts[3] = C
        else:
            counts[2] = C
        # global entity ids per sorted cell, per entity dim
        ent = {0: cells}
        edge_ids = _entity_lookup(mesh.edges)
        ent[1] = np.array([[edge_ids[(c[i], c[j])] for i, j in local_edges(dim)] for c in cells.tolist()],
                          dtype=np.int64).reshape(C, -1)
        if dim == 3:
            face_ids = _entity_lookup(mesh.faces)
            ent[2] = np.array([[face_ids[(c[a], c[b], c[e])] for a, b, e in local_faces(3)]
                               for c in cells.tolist()], dtype=np.int64).reshape(C, -1)
            ent[3] = np.arange(C)[:, None]
        else:
            ent[2] = np.arange(C)[:, None]
        self.entity_ids = ent
        offset = 0
        self.entity_offsets = {}
        dofmap = np.empty((C, el.space_dim), dtype=np.int64)
        for edim in range(dim + 1):
            per = el.dofs_per_entity(edim)
            self.entity_offsets[edim] = (offset, per)
            for le, local_ids in enumerate(el.entity_dofs[edim]):
                for r, ldof in enumerate(local_ids):
                    dofmap[:, ldof] = offset + ent[edim][:, le] * per + r
            offset += per * counts[edim]
        self.dofmap = dofmap
        self.n_scalar = offset

    @property
    def dim(self):
        return self.n_scalar * self.ncopies

    @property
    def signs(self):
        # ascending-vertex traversal makes every shared dof agree already
        return np.ones_like(self.dofmap)

    def global_dofs(self, copy):
        return copy * self.n_scalar + self.dofmap

    # -- tabulation ----------------------------------------------------------

    def tabulate(self, degree):
        """Physical basis values/derivatives at the cell quadrature points.

        Returns ``(points (C,q,d), weights (C,q), values, derivs)`` where the
        weights include ``|det J|``.
        """
        if degree not in self._tab_cache:
            rule = quadrature_rule(self.mesh.dim, degree)
            geom = self.geometry
            v, d = self.element.tabulate(rule.points)
            vals, ders = push_forward(self.element, geom, v, d)
            pts = geom.map_points(rule.points)
            w = np.abs(geom.detJ)[:, None] * rule.weights[None, :]
            self._tab_cache[degree] = (pts, w, vals, ders)
        return self._tab_cache[degree]

    def tabulate_at(self, cell_ids, xhat):
        """Physical values/derivatives at per-cell reference points ``xhat`` (n, q, d)."""
        g = self.geometry
        sub = CellGeometry(g.x0[cell_ids], g.J[cell_ids], g.detJ[cell_ids], g.Jinv[cell_ids])
        vals, ders = [], []
        for i in range(len(cell_ids)):
            one = CellGeometry(sub.x0[i:i + 1], sub.J[i:i + 1], sub.detJ[i:i + 1], sub.Jinv[i:i + 1])
            v, d = self.element.tabulate(xhat[i])
            pv, pd = push_forward(self.element, one, v, d)
            vals.append(pv[0])
            ders.append(pd[0])
        return np.array(vals), np.array(ders)

    # -- interpolation and evaluation ------------------------------------------

    def interpolate(self, fn):
        """Canonical interpolant of ``fn``.

        ``fn(x)`` receives points (N, d) and returns, per point, a scalar
        (LE, one copy), a vector of length ``ncopies`` (LE), a vector of length
        d (vector family, one copy) or an (ncopies, d) array.
        """
        el, geom = self.element, self.geometry
        C = len(self.sorted_cells)
        ncomp = el.ncomp
        out = np.zeros(self.dim)
        for ldof, dof in enumerate(el.dofs):
            x = geom.map_points(dof.points)  # (C, q, d)
            vals = np.asarray(fn(x.reshape(-1, self.mesh.dim)), dtype=float)
            vals = vals.reshape(C, len(dof.points), self.ncopies, ncomp)
            for I in range(self.ncopies):
                ref = pull_back(el, geom, vals[:, :, I, :])
                out[I * self.n_scalar + self.dofmap[:, ldof]] = np.einsum("qc,Cqc->C", dof.weights, ref)
        return out

    def evaluate(self, coeffs, degree):
        """Field values and derivatives at the quadrature points of ``degree``.

        Values have shape (C, q, ncopies[, d]); derivatives (C, q, ncopies, ...).
        """
        _, _, vals, ders = self.tabulate(degree)
        c = np.asarray(coeffs)[self.global_dofs_all()]  # (C, ncopies, nb)
        return _contract(c, vals), _contract(c, ders)

    def global_dofs_all(self):
        return np.stack([self.global_dofs(I) for I in range(self.ncopies)], axis=1)

    def evaluate_at(self, coeffs, cell_ids, xhat):
        vals, ders = self.tabulate_at(cell_ids, xhat)
        c = np.asarray(coeffs)[self.global_dofs_all()[cell_ids]]
        return _contract(c, vals), _contract(c, ders)

    def evaluate_points(self, coeffs, points, tol=1e-12):
        """Field values at physical points (N, d); points outside the mesh raise."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells = locate_cells(self.mesh, points, tol)
        if np.any(cells < 0):
            raise ValueError("point outside the mesh")
        g = self.geometry
        xhat = np.einsum("nij,nj->ni", g.Jinv[cells], points - g.x0[cells])[:, None, :]
        vals, _ = self.evaluate_at(coeffs, cells, xhat)
        return vals[:, 0]

    # -- norms ---------------------------------------------------------------

    def l2_norm(self, coeffs, degree=None):
        degree = degree or 2 * self.degree + 2
        _, w, _, _ = self.tabulate(degree)
        v, _ = self.evaluate(coeffs, degree)
        return float(np.sqrt(np.einsum("cq,cq...->...", w, v ** 2).sum()))

    def seminorm(self, coeffs, degree=None):
        """L2 norm of grad (LE), curl (NED) or div (RT/BDM) of the field."""
        degree = degree or 2 * self.degree + 2
        _, w, _, _ = self.tabulate(degree)
        _, d = self.evaluate(coeffs, degree)
        return float(np.sqrt(np.einsum("cq,cq...->...", w, d ** 2).sum()))

    def l2_error(self, coeffs, exact, degree=None):
        """L2 norm of ``exact - u_h``; ``exact`` follows the ``interpolate`` shape rules."""
        degree = degree or 2 * self.degree + 4
        pts, w, _, _ = self.tabulate(degree)
        v, _ = self.evaluate(coeffs, degree)
        ex = np.asarray(exact(pts.reshape(-1, self.mesh.dim)), dtype=float).reshape(v.shape)
        return float(np.sqrt(np.einsum("cq,cq...->...", w, (ex - v) ** 2).sum()))

    # -- constraints ---------------------------------------------------------

    def boundary_scalar_dofs(self, facets):
        """Scalar dofs living on the closure of the given facets."""
        if self.family != "LE":
            raise ValueError("essential conditions are only imposed on the Lagrange space")
        facets = np.asarray(facets, dtype=np.int64)
        mesh = self.mesh
        fverts = mesh.facets[facets]
        out = [np.unique(fverts)]
        if self.degree == 2:
            off, per = self.entity_offsets[1]
            edge_ids = _entity_lookup(mesh.edges)
            eds = set()
            for fv in fverts.tolist():
                for a in range(len(fv)):
                    for b in range(a + 1, len(fv)):
                        eds.add(edge_ids[tuple(sorted((fv[a], fv[b])))])
            out.append(off + np.array(sorted(eds), dtype=np.int64) * per)
        return np.unique(np.concatenate(out))

    def dof_coordinates(self):
        """Physical location of every scalar Lagrange dof."""
        if self.family != "LE":
            raise ValueError("dof coordinates only exist for Lagrange spaces")
        coords = np.zeros((self.n_scalar, self.mesh.dim))
        x = self.geometry
        for ldof, dof in enumerate(self.element.dofs):
            coords[self.dofmap[:, ldof]] = x.map_points(dof.points)[:, 0, :]
        return coords

    def constrained_dofs(self, tags, components=None):
        """Global indices (in this tensorized space) of Dirichlet dofs on ``tags``."""
        if isinstance(tags, str):
            tags = (tags,)
        scal = self.boundary_scalar_dofs(self.mesh.tagged(*tags))
        comps = range(self.ncopies) if components is None else components
        return np.unique(np.concatenate([I * self.n_scalar + scal for I in comps]
                                        + [np.zeros(0, dtype=np.int64)]))


def _neighbors(mesh):
    """(C, d+1) cell across the facet opposite each local vertex, -1 on the boundary."""
    lookup = _entity_lookup(mesh.facets)
    d = mesh.dim
    out = -np.ones((len(mesh.cells), d + 1), dtype=np.int64)
    for c, cell in enumerate(mesh.cells.tolist()):
        for i in range(d + 1):
            f = lookup[tuple(sorted(cell[:i] + cell[i + 1:]))]
            a, b = mesh.facet_cells[f]
            out[c, i] = b if a == c else a
    return out


def _barycentric(mesh, c, x):
    v = mesh.vertices[mesh.cells[c]]
    T = (v[1:] - v[0]).T
    lam = np.linalg.solve(T, x - v[0])
    return np.concatenate([[1.0 - lam.sum()], lam])


def locate_cells(mesh, points, tol=1e-12):
    """Cell containing each point (-1 if none), by walking through neighbours.

    A walk that leaves the mesh (possible on non-convex domains) falls back
    to testing every cell.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    nb = _neighbors(mesh)
    out = -np.ones(len(points), dtype=np.int64)
    c = 0
    for k, x in enumerate(points):
        for _ in range(len(mesh.cells) + 1):
            lam = _barycentric(mesh, c, x)
            i = int(np.argmin(lam))
            if lam[i] >= -tol:
                out[k] = c
                break
            if nb[c, i] < 0:
                break
            c = nb[c, i]
        if out[k] < 0:
            for cc in range(len(mesh.cells)):
                if _barycentric(mesh, cc, x).min() >= -tol:
                    out[k] = c = cc
                    break
    return out


def _contract(c, tab):
    """c: (C, ncopies, nb); tab: (C, q, nb, ...) -> (C, q, ncopies, ...)."""
    return np.einsum("cIb,cqb...->cqI...", c, tab)


@dataclass(frozen=True)
class SpaceDims:
    n_1: int
    n_c: int
    n_d: int

    @property
    def n_t(self):
        return self.n_1 + self.n_c + self.n_d


@dataclass(eq=False)
class Field:
    """Coefficient vector attached to a space."""
    space: FunctionSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dim,):
            raise ValueError(f"expected {self.space.dim} coefficients, got {self.coeffs.shape}")

    def l2_norm(self):
        return self.space.l2_norm(self.coeffs)


@dataclass(eq=False)
class MixedSpace:
    """The three row-wise tensorized spaces of an element triple."""
    mesh: Mesh
    triple: object

    def __post_init__(self):
        if isinstance(self.triple, str):
            self.triple = ElementTriple.parse(self.triple)
        n = self.mesh.dim
        t = self.triple
        self.U = FunctionSpace(self.mesh, "LE", t.u_degree, n)
        self.K = FunctionSpace(self.mesh, f"NED{t.k_kind}", t.k_degree, n)
        self.P = FunctionSpace(self.mesh, t.p_family, t.p_degree, n)

    @property
    def sizes(self):
        return self.U.dim, self.K.dim, self.P.dim

    @property
    def dims(self):
        return SpaceDims(*self.sizes)

    def grad_mismatch(self, x, degree=None):
        """L2 norm of K_h - grad U_h."""
        u, k, _ = self.split(x)
        degree = degree or 2 * max(self.U.degree, self.K.degree) + 2
        _, w, _, _ = self.U.tabulate(degree)
        _, gu = self.U.evaluate(u, degree)
        vk, _ = self.K.evaluate(k, degree)
        d2 = ((vk - gu) ** 2).reshape(w.shape + (-1,)).sum(axis=-1)
        return float(np.sqrt(np.sum(w * d2)))

    @property
    def dim(self):
        return sum(self.sizes)

    @property
    def offsets(self):
        n1, nc, _ = self.sizes
        return 0, n1, n1 + nc

    def split(self, x):
        a, b, c = self.offsets
        return x[a:b], x[b:c], x[c:]

    def join(self, u, k, p):
        return np.concatenate([u, k, p])


def build_space(mesh: Mesh, family: str, degree: int, ncopies: int = 1) -> FunctionSpace:
    el = reference_element(family, degree, mesh.dim)
    if el.dim != mesh.dim:
        raise ValueError("element and mesh dimensions differ")
    return FunctionSpace(mesh, family, degree, ncopies)
