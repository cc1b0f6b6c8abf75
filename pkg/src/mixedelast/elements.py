"""Reference simplicial elements: Lagrange, Nedelec (both kinds), RT, BDM.

Every element is built the same way: a spanning set of the polynomial
space is written in a monomial basis, orthonormalized, and the nodal basis
is obtained by inverting the generalized Vandermonde matrix of the degrees
of freedom applied to that prime basis.

Degrees of freedom on edges and faces are averages over the entity of
``v . w`` against facet polynomials, where ``w`` is built from vertex
differences of the entity taken in ascending local vertex order.  Cells are
always traversed with vertices sorted by global index, so the local order
of an entity coincides with its global order and shared dofs agree between
neighbours without any sign or permutation fix-up.  Those functionals are
also invariant under the matching Piola map, so the reference basis pushed
forward is dual to the physical dofs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from .quadrature import facet_rule, quadrature_rule, reference_measure

FAMILIES = ("LE", "NED1", "NED2", "RT", "BDM")
MAPPINGS = {"LE": "identity", "NED1": "covariant", "NED2": "covariant",
            "RT": "contravariant", "BDM": "contravariant"}
DERIVATIVE = {"identity": "grad", "covariant": "curl", "contravariant": "div"}

REF_VERTICES = {
    2: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    3: np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
}
_MOMENT_DEGREE = 6


def local_edges(dim):
    return list(combinations(range(dim + 1), 2))


def local_faces(dim):
    return list(combinations(range(dim + 1), 3)) if dim == 3 else []


# --------------------------------------------------------------------------
# monomials


def _homogeneous(dim, total):
    if dim == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        for rest in _homogeneous(dim - 1, total - first):
            out.append((first,) + rest)
    return out


def monomial_exponents(dim, degree):
    exps = []
    for total in range(degree + 1):
        exps.extend(_homogeneous(dim, total))
    return exps


def eval_monomials(exps, points):
    """Values (npts, nmono) and gradients (npts, nmono, dim) of monomials."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    E = np.asarray(exps, dtype=int)
    npts, dim = points.shape
    vals = np.ones((npts, len(E)))
    for d in range(dim):
        vals *= points[:, d:d + 1] ** E[None, :, d]
    grads = np.zeros((npts, len(E), dim))
    for d in range(dim):
        e = E.copy()
        coef = e[:, d].astype(float)
        e[:, d] = np.maximum(e[:, d] - 1, 0)
        g = np.ones((npts, len(E)))
        for dd in range(dim):
            g *= points[:, dd:dd + 1] ** e[None, :, dd]
        grads[:, :, d] = g * coef[None, :]
    return vals, grads


def _unit(dim, i):
    u = [0] * dim
    u[i] = 1
    return tuple(u)


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


_LEVI = np.zeros((3, 3, 3))
_LEVI[0, 1, 2] = _LEVI[1, 2, 0] = _LEVI[2, 0, 1] = 1.0
_LEVI[0, 2, 1] = _LEVI[2, 1, 0] = _LEVI[1, 0, 2] = -1.0


def _span(family, degree, dim):
    """Spanning set as (nspan, ncomp, nmono) coefficients over P_degree monomials."""
    exps = monomial_exponents(dim, degree)
    col = {e: i for i, e in enumerate(exps)}
    if family == "LE":
        return np.eye(len(exps))[:, None, :], exps
    rows = []

    def vec(entries):
        c = np.zeros((dim, len(exps)))
        for comp, e, v in entries:
            c[comp, col[e]] += v
        return c

    if family in ("NED2", "BDM"):
        for comp in range(dim):
            for e in exps:
                rows.append(vec([(comp, e, 1.0)]))
        return np.array(rows), exps
    for comp in range(dim):
        for e in monomial_exponents(dim, degree - 1):
            rows.append(vec([(comp, e, 1.0)]))
    for m in _homogeneous(dim, degree - 1):
        if family == "RT":
            rows.append(vec([(c, _add(m, _unit(dim, c)), 1.0) for c in range(dim)]))
        elif dim == 2:  # NED1: (-y, x) m
            rows.append(vec([(0, _add(m, (0, 1)), -1.0), (1, _add(m, (1, 0)), 1.0)]))
        else:  # NED1: x cross (m e_c)
            for c in range(3):
                entries = []
                for i in range(3):
                    for j in range(3):
                        if _LEVI[i, j, c]:
                            entries.append((i, _add(m, _unit(3, j)), _LEVI[i, j, c]))
                rows.append(vec(entries))
    return np.array(rows), exps


def _orthonormal_rows(span):
    flat = span.reshape(len(span), -1)
    _, s, vt = np.linalg.svd(flat, full_matrices=False)
    rank = int(np.sum(s > 1e-12 * s[0]))
    return vt[:rank].reshape((rank,) + span.shape[1:])


# --------------------------------------------------------------------------
# degrees of freedom


@dataclass(frozen=True)
class Dof:
    """Functional ``sum_q weights[q] . v(points[q])`` tied to a mesh entity."""
    entity: tuple  # (entity dim, local entity index)
    points: np.ndarray
    weights: np.ndarray  # (q, ncomp)


def _facet_polys(k, nvert):
    """Intrinsic basis of P_k on a facet as functions of its barycentrics."""
    if k == 0:
        return [lambda b: np.ones(len(b))]
    if k == 1:
        return [lambda b, i=i: b[:, i] for i in range(nvert)]
    out = [lambda b, i=i: b[:, i] ** 2 for i in range(nvert)]
    out += [lambda b, i=i, j=j: b[:, i] * b[:, j] for i, j in combinations(range(nvert), 2)]
    return out


def _facet_moments(entity, verts, direction, polys):
    pts, bary, w = facet_rule(verts, _MOMENT_DEGREE)
    return [Dof(entity, pts, (w * q(bary))[:, None] * direction[None, :]) for q in polys]


def _interior_moments(dim, weight_fields):
    rule = quadrature_rule(dim, _MOMENT_DEGREE)
    w = rule.weights / reference_measure(dim)
    return [Dof((dim, 0), rule.points, w[:, None] * f(rule.points)) for f in weight_fields]


def _const(v):
    v = np.asarray(v, dtype=float)
    return lambda x: np.tile(v, (len(x), 1))


def _normal(verts):
    if len(verts) == 2:
        t = verts[1] - verts[0]
        return np.array([t[1], -t[0]])
    return np.cross(verts[1] - verts[0], verts[2] - verts[0])


def _build_dofs(family, k, dim):
    V = REF_VERTICES[dim]
    dofs = []
    if family == "LE":
        for i in range(dim + 1):
            dofs.append(Dof((0, i), V[i:i + 1], np.ones((1, 1))))
        if k == 2:
            for e, (i, j) in enumerate(local_edges(dim)):
                dofs.append(Dof((1, e), 0.5 * (V[i] + V[j])[None, :], np.ones((1, 1))))
        return dofs

    eye = np.eye(dim)
    if family in ("NED1", "NED2"):
        edge_k = k - 1 if family == "NED1" else k
        for e, (i, j) in enumerate(local_edges(dim)):
            dofs += _facet_moments((1, e), V[[i, j]], V[j] - V[i], _facet_polys(edge_k, 2))
        if k == 2 and dim == 3:
            for f, (a, b, c) in enumerate(local_faces(dim)):
                t1, t2 = V[b] - V[a], V[c] - V[a]
                dofs += _facet_moments((2, f), V[[a, b, c]], t1, _facet_polys(0, 3))
                dofs += _facet_moments((2, f), V[[a, b, c]], t2, _facet_polys(0, 3))
                if family == "NED2":
                    pts, _, w = facet_rule(V[[a, b, c]], _MOMENT_DEGREE)
                    dofs.append(Dof((2, f), pts, w[:, None] * (pts - V[a])))
        if k == 2 and dim == 2:
            fields = [_const(eye[0]), _const(eye[1])]
            if family == "NED2":
                fields.append(lambda x: x.copy())
            dofs += _interior_moments(2, fields)
        return dofs

    facet_k = k - 1 if family == "RT" else k
    facets = local_edges(2) if dim == 2 else local_faces(3)
    for f, ids in enumerate(facets):
        fv = V[list(ids)]
        dofs += _facet_moments((dim - 1, f), fv, _normal(fv), _facet_polys(facet_k, dim))
    if k == 2:
        fields = [_const(eye[c]) for c in range(dim)]
        if family == "BDM":
            if dim == 2:
                fields.append(lambda x: np.column_stack([-x[:, 1], x[:, 0]]))
            else:
                fields += [lambda x, c=c: np.cross(x, eye[c]) for c in range(3)]
        dofs += _interior_moments(dim, fields)
    return dofs


# --------------------------------------------------------------------------
# element


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    family: str
    degree: int
    dim: int
    dofs: tuple
    coeffs: np.ndarray  # (ndofs, ncomp, nmono) nodal basis
    exps: tuple
    entity_dofs: dict = field(repr=False)

    @property
    def mapping(self):
        return MAPPINGS[self.family]

    @property
    def ncomp(self):
        return 1 if self.family == "LE" else self.dim

    @property
    def value_shape(self):
        return () if self.family == "LE" else (self.dim,)

    @property
    def space_dim(self):
        return len(self.dofs)

    @property
    def label(self):
        return f"{self.family}{self.degree}"

    def dofs_per_entity(self, edim):
        """Number of dofs attached to each entity of dimension ``edim``."""
        lists = self.entity_dofs.get(edim, [])
        return len(lists[0]) if lists else 0

    def jacobians(self, points):
        """Values (npts, nb, ncomp) and full gradients (npts, nb, ncomp, dim)."""
        mv, mg = eval_monomials(self.exps, points)
        vals = np.einsum("bcm,pm->pbc", self.coeffs, mv)
        grads = np.einsum("bcm,pmd->pbcd", self.coeffs, mg)
        return vals, grads

    def tabulate(self, points):
        """Basis values and the family's natural derivative.

        LE: values (npts, nb), gradients (npts, nb, dim).
        NED: values (npts, nb, dim), curl (npts, nb) in 2D / (npts, nb, 3) in 3D.
        RT/BDM: values (npts, nb, dim), divergence (npts, nb).
        """
        vals, grads = self.jacobians(points)
        if self.family == "LE":
            return vals[:, :, 0], grads[:, :, 0, :]
        if self.mapping == "covariant":
            if self.dim == 2:
                curl = grads[:, :, 1, 0] - grads[:, :, 0, 1]
            else:
                curl = np.stack([grads[:, :, 2, 1] - grads[:, :, 1, 2],
                                 grads[:, :, 0, 2] - grads[:, :, 2, 0],
                                 grads[:, :, 1, 0] - grads[:, :, 0, 1]], axis=-1)
            return vals, curl
        return vals, np.trace(grads, axis1=2, axis2=3)

    def apply_dofs(self, fn):
        """Apply every dof to a reference-coordinate function ``fn(x) -> (npts, ncomp)``."""
        out = np.empty(len(self.dofs))
        for i, d in enumerate(self.dofs):
            v = np.asarray(fn(d.points), dtype=float).reshape(len(d.points), -1)
            out[i] = np.sum(d.weights * v)
        return out

    def dof_matrix(self):
        """Dof functionals applied to the nodal basis (identity if unisolvent)."""
        mat = np.empty((len(self.dofs), len(self.dofs)))
        for i, d in enumerate(self.dofs):
            vals, _ = self.jacobians(d.points)
            mat[i] = np.einsum("pc,pbc->b", d.weights, vals)
        return mat


@lru_cache(maxsize=None)
def reference_element(family: str, degree: int, dim: int) -> ReferenceElement:
    family = family.upper()
    if family not in FAMILIES or degree not in (1, 2) or dim not in (2, 3):
        raise ValueError(f"unsupported element ({family}, {degree}, {dim})")
    span, exps = _span(family, degree, dim)
    prime = _orthonormal_rows(span)
    dofs = _build_dofs(family, degree, dim)
    if len(dofs) != len(prime):
        raise RuntimeError(f"{family}{degree} in {dim}D: {len(dofs)} dofs for a "
                           f"{len(prime)}-dimensional space")
    vander = np.empty((len(dofs), len(prime)))
    for i, d in enumerate(dofs):
        mv, _ = eval_monomials(exps, d.points)
        vals = np.einsum("jcm,pm->pjc", prime, mv)
        vander[i] = np.einsum("pc,pjc->j", d.weights, vals)
    coeffs = np.einsum("ij,jcm->icm", np.linalg.inv(vander).T, prime)
    entity_dofs = {}
    nents = {0: dim + 1, 1: len(local_edges(dim)), 2: 4 if dim == 3 else 1, 3: 1}
    for edim in range(dim + 1):
        entity_dofs[edim] = [[] for _ in range(nents[edim])]
    for i, d in enumerate(dofs):
        entity_dofs[d.entity[0]][d.entity[1]].append(i)
    return ReferenceElement(family, degree, dim, tuple(dofs), coeffs, tuple(exps), entity_dofs)


# --------------------------------------------------------------------------
# geometry and Piola maps


@dataclass(frozen=True)
class CellGeometry:
    """Affine maps x = x0 + J xhat for a batch of cells."""
    x0: np.ndarray  # (C, d)
    J: np.ndarray  # (C, d, d)
    detJ: np.ndarray  # (C,)
    Jinv: np.ndarray  # (C, d, d)

    @classmethod
    def from_vertices(cls, verts):
        """``verts``: (C, d+1, d) vertex coordinates in local order."""
        verts = np.asarray(verts, dtype=float)
        if verts.ndim == 2:
            verts = verts[None]
        x0 = verts[:, 0, :]
        J = np.transpose(verts[:, 1:, :] - x0[:, None, :], (0, 2, 1))
        det = np.linalg.det(J)
        if np.any(np.abs(det) <= 1e-14 * np.max(np.abs(J), axis=(1, 2)) ** J.shape[1]):
            raise ValueError("degenerate cell")
        return cls(x0, J, det, np.linalg.inv(J))

    def map_points(self, xhat):
        return self.x0[:, None, :] + np.einsum("cij,pj->cpi", self.J, xhat)

    def to_reference(self, x):
        """Reference coordinates of physical points ``x`` (C, p, d)."""
        return np.einsum("cij,cpj->cpi", self.Jinv, x - self.x0[:, None, :])


def push_forward(element, geom, values, derivs):
    """Map reference tabulations (from ``element.tabulate``) to physical cells.

    Returns arrays with a leading cell axis.
    """
    J, Jinv, det = geom.J, geom.Jinv, geom.detJ
    if element.mapping == "identity":
        return (np.broadcast_to(values, (len(det),) + values.shape).copy(),
                np.einsum("pbk,cki->cpbi", derivs, Jinv))
    if element.mapping == "covariant":
        vals = np.einsum("pbk,cki->cpbi", values, Jinv)
        if element.dim == 2:
            return vals, derivs[None] / det[:, None, None]
        return vals, np.einsum("cij,pbj->cpbi", J, derivs) / det[:, None, None, None]
    vals = np.einsum("cij,pbj->cpbi", J, values) / det[:, None, None, None]
    return vals, derivs[None] / det[:, None, None]


def pull_back(element, geom, phys_values):
    """Physical field values (C, p, ncomp) to reference values for dof application."""
    if element.mapping == "identity":
        return phys_values
    if element.mapping == "covariant":
        return np.einsum("cpi,cik->cpk", phys_values, geom.J)
    return geom.detJ[:, None, None] * np.einsum("cpi,cki->cpk", phys_values, geom.Jinv)


# --------------------------------------------------------------------------
# element triples


@dataclass(frozen=True)
class ElementTriple:
    """A choice (LE_i, NED^j_k, RT_l | BDM_l) written like ``L1N12B2``."""
    u_degree: int
    k_kind: int
    k_degree: int
    p_family: str
    p_degree: int

    @classmethod
    def parse(cls, label: str) -> "ElementTriple":
        s = label.strip().upper()
        try:
            if len(s) != 7 or s[0] != "L" or s[2] != "N" or s[5] not in "RB":
                raise ValueError
            trip = cls(int(s[1]), int(s[3]), int(s[4]), "RT" if s[5] == "R" else "BDM", int(s[6]))
        except ValueError:
            raise ValueError(f"cannot parse element triple {label!r}") from None
        for deg in (trip.u_degree, trip.k_degree, trip.p_degree):
            if deg not in (1, 2):
                raise ValueError(f"unsupported degree in {label!r}")
        if trip.k_kind not in (1, 2):
            raise ValueError(f"unsupported Nedelec kind in {label!r}")
        return trip

    @property
    def label(self):
        return f"L{self.u_degree}N{self.k_kind}{self.k_degree}{self.p_family[0]}{self.p_degree}"

    def elements(self, dim):
        return (reference_element("LE", self.u_degree, dim),
                reference_element(f"NED{self.k_kind}", self.k_degree, dim),
                reference_element(self.p_family, self.p_degree, dim))


def all_triples():
    """The 32 combinations of degree-1/2 elements, in a fixed order."""
    out = []
    for u in (1, 2):
        for kind in (1, 2):
            for kd in (1, 2):
                for pf in ("R", "B"):
                    for pd in (1, 2):
                        out.append(ElementTriple.parse(f"L{u}N{kind}{kd}{pf}{pd}"))
    return out
