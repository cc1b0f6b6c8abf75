"""Residual, tangent and metric assembly for the three-field mixed formulation.

Unknown vector layout: ``x = [u, k, p]``, each block in the row-wise
tensorized numbering of :mod:`mixedelast.spaces`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .elements import ElementTriple
from .mesh import Mesh
from .quadrature import facet_rule
from .spaces import MixedSpace

_CHUNK = 4_000_000


@dataclass(frozen=True)
class DirichletBC:
    """Prescribed displacement on facets carrying any of ``tags``.

    ``value(x) -> (N, n)``; ``None`` means zero.  ``components`` restricts
    the condition to some displacement components.
    """
    tags: Sequence[str]
    value: Callable | None = None
    components: Sequence[int] | None = None


@dataclass
class LoadCase:
    """Body force, nominal tractions by tag, and displacement conditions."""
    body_force: Callable | None = None
    tractions: dict = field(default_factory=dict)
    dirichlet: list = field(default_factory=list)


@dataclass
class BlockSystem:
    """Tangent blocks; the full operator is [[0,0,S1d],[Sc1,Scc,0],[0,Sdc,Sdd]]."""
    S1d: sp.csr_matrix
    Sc1: sp.csr_matrix
    Scc: sp.csr_matrix
    Sdc: sp.csr_matrix
    Sdd: sp.csr_matrix

    def matrix(self):
        return sp.bmat([[None, None, self.S1d],
                        [self.Sc1, self.Scc, None],
                        [None, self.Sdc, self.Sdd]], format="csr",
                       dtype=float).tocsr()


@dataclass
class MetricMatrices:
    """Gram matrices of the H1, H(curl) and H(div) inner products."""
    D1: sp.csr_matrix
    Dc: sp.csr_matrix
    Dd: sp.csr_matrix

    def matrix(self):
        return sp.block_diag([self.D1, self.Dc, self.Dd], format="csr")


def _scatter(local, rows, cols, shape):
    C, a, b = local.shape
    r = np.broadcast_to(rows[:, :, None], (C, a, b)).ravel()
    c = np.broadcast_to(cols[:, None, :], (C, a, b)).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


def _blockdiag(scalar, n):
    return sp.kron(sp.identity(n, format="csr"), scalar, format="csr")


class MixedProblem:
    """A mesh, element triple, material and load case with cached linear blocks."""

    def __init__(self, mesh: Mesh, triple, material, load: LoadCase | None = None,
                 quad_degree: int | None = None):
        self.mesh = mesh
        self.triple = ElementTriple.parse(triple) if isinstance(triple, str) else triple
        self.material = material
        self.load = load or LoadCase()
        self.space = MixedSpace(mesh, self.triple)
        t = self.triple
        self.quad_degree = quad_degree or 2 * max(t.u_degree, t.k_degree, t.p_degree) + 2
        self.n = mesh.dim

    # -- linear blocks -------------------------------------------------------

    def _tab(self, V):
        return V.tabulate(self.quad_degree)

    @cached_property
    def linear_blocks(self):
        V1, Vc, Vd = self.space.U, self.space.K, self.space.P
        n = self.n
        _, w, _, grad1 = self._tab(V1)
        _, _, lam, _ = self._tab(Vc)
        _, _, phi, _ = self._tab(Vd)
        B = _scatter(np.einsum("cq,cqjd,cqid->cij", w, phi, grad1), V1.dofmap, Vd.dofmap,
                     (V1.n_scalar, Vd.n_scalar))
        C = _scatter(np.einsum("cq,cqjd,cqid->cij", w, grad1, lam), Vc.dofmap, V1.dofmap,
                     (Vc.n_scalar, V1.n_scalar))
        Mc = _scatter(np.einsum("cq,cqid,cqjd->cij", w, lam, lam), Vc.dofmap, Vc.dofmap,
                      (Vc.n_scalar, Vc.n_scalar))
        Md = _scatter(np.einsum("cq,cqid,cqjd->cij", w, phi, phi), Vd.dofmap, Vd.dofmap,
                      (Vd.n_scalar, Vd.n_scalar))
        return {"S1d": _blockdiag(B, n), "Sc1": _blockdiag(C, n),
                "Scc": -_blockdiag(Mc, n), "Sdd": -_blockdiag(Md, n)}

    # -- loads ---------------------------------------------------------------

    @cached_property
    def _unit_load(self):
        """f1 for load scale one."""
        V1 = self.space.U
        n = self.n
        f = np.zeros(V1.dim)
        if self.load.body_force is not None:
            pts, w, psi, _ = self._tab(V1)
            Bv = np.asarray(self.load.body_force(pts.reshape(-1, n)), dtype=float).reshape(pts.shape[:2] + (n,))
            loc = np.einsum("cq,cqI,cqi->cIi", w, Bv, psi)
            for I in range(n):
                np.add.at(f, V1.global_dofs(I), loc[:, I, :])
        for tag, trac in self.load.tractions.items():
            facets = self.mesh.tagged(tag)
            if len(facets) == 0:
                raise ValueError(f"no facets tagged {tag!r}")
            f += self._traction_vector(facets, trac)
        return f

    def _traction_vector(self, facets, trac):
        mesh, V1, n = self.mesh, self.space.U, self.n
        f = np.zeros(V1.dim)
        cells = mesh.facet_cells[facets, 0]
        if np.any(mesh.facet_cells[facets, 1] >= 0):
            raise ValueError("tractions may only be applied on boundary facets")
        geom = V1.geometry
        xs, ws = [], []
        for fid in facets:
            fv = mesh.vertices[mesh.facets[fid]]
            pts, _, w = facet_rule(fv, self.quad_degree)
            meas = np.linalg.norm(fv[1] - fv[0]) if n == 2 else 0.5 * np.linalg.norm(
                np.cross(fv[1] - fv[0], fv[2] - fv[0]))
            xs.append(pts)
            ws.append(w * meas)
        xs, ws = np.array(xs), np.array(ws)
        xhat = np.einsum("cij,cpj->cpi", geom.Jinv[cells], xs - geom.x0[cells][:, None, :])
        psi, _ = V1.tabulate_at(cells, xhat)
        if callable(trac):
            T = np.asarray(trac(xs.reshape(-1, n)), dtype=float).reshape(xs.shape[:2] + (n,))
        else:
            T = np.broadcast_to(np.asarray(trac, dtype=float), xs.shape[:2] + (n,))
        loc = np.einsum("fq,fqI,fqi->fIi", ws, T, psi)
        for I in range(n):
            np.add.at(f, I * V1.n_scalar + V1.dofmap[cells], loc[:, I, :])
        return f

    def external_load(self, scale=1.0):
        return scale * self._unit_load

    # -- Dirichlet data ------------------------------------------------------

    @cached_property
    def constrained(self):
        """Sorted global indices (in the full vector) of constrained displacement dofs."""
        V1 = self.space.U
        ids = [np.zeros(0, dtype=np.int64)]
        for bc in self.load.dirichlet:
            ids.append(V1.constrained_dofs(bc.tags, bc.components))
        return np.unique(np.concatenate(ids))

    @cached_property
    def free(self):
        mask = np.ones(self.space.dim, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)

    def dirichlet_values(self, scale=1.0):
        """Full-length vector holding the prescribed values on constrained dofs."""
        V1 = self.space.U
        n = self.n
        out = np.zeros(self.space.dim)
        coords = V1.dof_coordinates()
        for bc in self.load.dirichlet:
            ids = V1.constrained_dofs(bc.tags, bc.components)
            if bc.value is None:
                out[ids] = 0.0
                continue
            vals = np.asarray(bc.value(coords), dtype=float).reshape(len(coords), n)
            comp, scal = np.divmod(ids, V1.n_scalar)
            out[ids] = scale * vals[scal, comp]
        return out

    # -- nonlinear terms -----------------------------------------------------

    def _fields_K(self, x):
        _, k, _ = self.space.split(x)
        Kq, _ = self.space.K.evaluate(k, self.quad_degree)  # (C, q, n, n)
        return Kq

    def _chunks(self, nb):
        C = len(self.mesh.cells)
        q = len(self._tab(self.space.P)[1][0])
        size = max(1, _CHUNK // max(1, q * self.n ** 4 * nb))
        return [slice(s, min(C, s + size)) for s in range(0, C, size)]

    def stress_residual(self, x):
        """Vector <P(K_h), Phi_i> over the stress space."""
        Vd = self.space.P
        _, w, phi, _ = self._tab(Vd)
        P = self.material.stress(self._fields_K(x))
        loc = np.einsum("cq,cqIa,cqia->cIi", w, P, phi)
        r = np.zeros(Vd.dim)
        for I in range(self.n):
            np.add.at(r, Vd.global_dofs(I), loc[:, I, :])
        return r

    def assemble_Sdc(self, x):
        Vc, Vd = self.space.K, self.space.P
        n = self.n
        _, w, phi, _ = self._tab(Vd)
        _, _, lam, _ = self._tab(Vc)
        K = self._fields_K(x)
        nbc, nbd = lam.shape[2], phi.shape[2]
        rows = Vd.global_dofs_all().reshape(len(w), -1)  # (C, n*nbd), order (I, i)
        cols = Vc.global_dofs_all().reshape(len(w), -1)
        data, rr, cc = [], [], []
        for sl in self._chunks(max(nbc, nbd)):
            A = self.material.tangent(K[sl])
            T = np.einsum("cqIaRb,cqjb->cqIaRj", A, lam[sl], optimize=True)
            loc = np.einsum("cq,cqIaRj,cqia->cIiRj", w[sl], T, phi[sl], optimize=True)
            loc = loc.reshape(loc.shape[0], n * nbd, n * nbc)
            data.append(loc)
            rr.append(rows[sl])
            cc.append(cols[sl])
        return _scatter(np.concatenate(data), np.concatenate(rr), np.concatenate(cc),
                        (Vd.dim, Vc.dim))

    # -- public assembly -----------------------------------------------------

    def residual(self, x, scale=1.0):
        lb = self.linear_blocks
        u, k, p = self.space.split(x)
        r1 = lb["S1d"] @ p - self.external_load(scale)
        rc = lb["Sc1"] @ u + lb["Scc"] @ k
        rd = self.stress_residual(x) + lb["Sdd"] @ p
        return np.concatenate([r1, rc, rd])

    def tangent(self, x):
        lb = self.linear_blocks
        return BlockSystem(lb["S1d"], lb["Sc1"], lb["Scc"], self.assemble_Sdc(x), lb["Sdd"])

    @cached_property
    def metrics(self):
        V1, Vc, Vd = self.space.U, self.space.K, self.space.P
        n = self.n
        _, w, psi, g = self._tab(V1)
        _, _, lam, curl = self._tab(Vc)
        _, _, phi, div = self._tab(Vd)
        D1 = np.einsum("cq,cqi,cqj->cij", w, psi, psi) + np.einsum("cq,cqid,cqjd->cij", w, g, g)
        if curl.ndim == 3:
            cc = np.einsum("cq,cqi,cqj->cij", w, curl, curl)
        else:
            cc = np.einsum("cq,cqid,cqjd->cij", w, curl, curl)
        Dc = np.einsum("cq,cqid,cqjd->cij", w, lam, lam) + cc
        Dd = np.einsum("cq,cqid,cqjd->cij", w, phi, phi) + np.einsum("cq,cqi,cqj->cij", w, div, div)
        mk = lambda loc, V: _blockdiag(_scatter(loc, V.dofmap, V.dofmap, (V.n_scalar, V.n_scalar)), n)
        return MetricMatrices(mk(D1, V1), mk(Dc, Vc), mk(Dd, Vd))


def assemble_residual(problem: MixedProblem, x, scale=1.0):
    return problem.residual(x, scale)


def assemble_tangent(problem: MixedProblem, x) -> BlockSystem:
    return problem.tangent(x)


def assemble_metrics(problem: MixedProblem) -> MetricMatrices:
    return problem.metrics


def apply_dirichlet(matrix, rhs, constrained, values=None):
    """Reduce ``matrix @ x = rhs`` to the free unknowns.

    ``values`` (full length) are lifted to the right-hand side.  Returns
    ``(A_ff, b_f, free)``.
    """
    matrix = sp.csr_matrix(matrix)
    N = matrix.shape[0]
    mask = np.ones(N, dtype=bool)
    mask[np.asarray(constrained, dtype=np.int64)] = False
    free = np.flatnonzero(mask)
    b = np.asarray(rhs, dtype=float)
    if values is not None:
        b = b - matrix @ np.where(mask, 0.0, values)
    return matrix[free][:, free], b[free], free
