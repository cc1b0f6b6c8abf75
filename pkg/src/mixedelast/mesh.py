"""Simplicial meshes: topology, structured generators, benchmark geometries, I/O."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, permutations
from pathlib import Path

import numpy as np

GAMMA1 = "gamma1"
GAMMA2 = "gamma2"


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class MeshStats:
    N_v: int
    N_ed: int
    N_f: int
    N_e: int
    h: float


@dataclass(frozen=True)
class Topology:
    edges: np.ndarray  # (E, 2) ascending vertex pairs, lexicographically sorted
    faces: np.ndarray  # (F, 3) ascending triples (3D only, else empty)
    cell_edges: np.ndarray  # (C, n_local_edges) indices into edges
    edge_signs: np.ndarray  # +1 if the cell-local direction agrees with the global one
    cell_faces: np.ndarray  # (C, 4) indices into faces (3D)
    face_signs: np.ndarray  # permutation parity of cell-local face order vs ascending


def _sort_parity(rows):
    """Parity (+1/-1) of the permutation sorting each row."""
    rows = np.asarray(rows)
    sign = np.ones(len(rows), dtype=int)
    n = rows.shape[1]
    for i in range(n):
        for j in range(i + 1, n):
            sign *= np.where(rows[:, i] > rows[:, j], -1, 1)
    return sign


def derive_topology(cells) -> Topology:
    """Unique edges/faces and cell incidences with orientation signs.

    Global orientation: edges run from the lower to the higher vertex index,
    faces are ascending vertex triples.
    """
    cells = np.asarray(cells, dtype=np.int64)
    if cells.ndim != 2 or cells.shape[1] not in (3, 4):
        raise MeshError("cells must be triangles or tetrahedra")
    s = np.sort(cells, axis=1)
    if np.any(s[:, 1:] == s[:, :-1]):
        raise MeshError("degenerate cell with a repeated vertex")
    if len(np.unique(s, axis=0)) != len(s):
        raise MeshError("duplicate cell")
    nloc = cells.shape[1]
    pairs = list(combinations(range(nloc), 2))
    local = np.stack([cells[:, [i, j]] for i, j in pairs], axis=1)  # (C, ne, 2)
    flat = np.sort(local.reshape(-1, 2), axis=1)
    edges, inv = np.unique(flat, axis=0, return_inverse=True)
    cell_edges = inv.reshape(len(cells), len(pairs))
    edge_signs = np.where(local[:, :, 0] < local[:, :, 1], 1, -1)
    if nloc == 4:
        triples = list(combinations(range(4), 3))
        localf = np.stack([cells[:, list(t)] for t in triples], axis=1)
        flatf = localf.reshape(-1, 3)
        faces, finv = np.unique(np.sort(flatf, axis=1), axis=0, return_inverse=True)
        cell_faces = finv.reshape(len(cells), 4)
        face_signs = _sort_parity(flatf).reshape(len(cells), 4)
    else:
        faces = np.zeros((0, 3), dtype=np.int64)
        cell_faces = np.zeros((len(cells), 0), dtype=np.int64)
        face_signs = np.zeros((len(cells), 0), dtype=int)
    return Topology(edges, faces, cell_edges, edge_signs, cell_faces, face_signs)


def _signed_volumes(vertices, cells):
    v = vertices[cells]
    d = v[:, 1:, :] - v[:, :1, :]
    return np.linalg.det(d)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle (2D) or tetrahedron (3D) mesh with tagged boundary facets.

    ``tags`` maps a tag name to an array of facet indices (edges in 2D,
    faces in 3D).  A facet may carry several tags.
    """
    vertices: np.ndarray
    cells: np.ndarray
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=float)
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] not in (2, 3):
            raise MeshError("vertices must be an (N, 2) or (N, 3) array")
        if cells.ndim != 2 or cells.shape[1] != verts.shape[1] + 1:
            raise MeshError("cell arity does not match the vertex dimension")
        if cells.size and (cells.min() < 0 or cells.max() >= len(verts)):
            raise MeshError("cell references a missing vertex")
        vol = _signed_volumes(verts, cells)
        neg = vol < 0
        if np.any(neg):
            cells = cells.copy()
            cells[neg, 0], cells[neg, 1] = cells[neg, 1].copy(), cells[neg, 0].copy()
            vol = np.abs(vol)
        if np.any(vol <= 0):
            raise MeshError("zero-volume cell")
        verts.setflags(write=False)
        cells.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "cells", cells)
        topo = derive_topology(cells)
        object.__setattr__(self, "topology", topo)
        tags = {k: np.asarray(sorted(set(int(i) for i in v)), dtype=np.int64)
                for k, v in dict(self.tags).items()}
        object.__setattr__(self, "tags", tags)
        fc = self._facet_cells()
        object.__setattr__(self, "facet_cells", fc)

    # -- basic entities ------------------------------------------------------

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def edges(self):
        return self.topology.edges

    @property
    def faces(self):
        return self.topology.faces

    @property
    def facets(self):
        return self.edges if self.dim == 2 else self.faces

    @property
    def cell_facets(self):
        return self.topology.cell_edges if self.dim == 2 else self.topology.cell_faces

    def _facet_cells(self):
        cf = self.cell_facets
        nf = len(self.facets)
        out = -np.ones((nf, 2), dtype=np.int64)
        counts = np.zeros(nf, dtype=np.int64)
        for c in range(len(self.cells)):
            for f in cf[c]:
                if counts[f] >= 2:
                    raise MeshError(f"facet {f} shared by more than two cells")
                out[f, counts[f]] = c
                counts[f] += 1
        return out

    @property
    def boundary_facets(self):
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    def stats(self) -> MeshStats:
        nf = len(self.faces) if self.dim == 3 else len(self.cells)
        return MeshStats(len(self.vertices), len(self.edges), nf, len(self.cells), self.h)

    @property
    def h(self):
        v = self.vertices[self.cells]
        lengths = [np.linalg.norm(v[:, i] - v[:, j], axis=1)
                   for i, j in combinations(range(self.dim + 1), 2)]
        return float(np.max(lengths))

    def euler_characteristic(self):
        if self.dim == 2:
            return len(self.vertices) - len(self.edges) + len(self.cells)
        return len(self.vertices) - len(self.edges) + len(self.faces) - len(self.cells)

    def cell_volumes(self):
        return _signed_volumes(self.vertices, self.cells) / (2.0 if self.dim == 2 else 6.0)

    # -- boundary --------------------------------------------------------------

    def facet_normal(self, f):
        """Outward unit normal of boundary facet ``f``."""
        verts = self.vertices[self.facets[f]]
        if self.dim == 2:
            t = verts[1] - verts[0]
            n = np.array([t[1], -t[0]])
        else:
            n = np.cross(verts[1] - verts[0], verts[2] - verts[0])
        n = n / np.linalg.norm(n)
        c = self.facet_cells[f, 0]
        centroid = self.vertices[self.cells[c]].mean(axis=0)
        if np.dot(n, verts.mean(axis=0) - centroid) < 0:
            n = -n
        return n

    def tag_facets(self, name, predicate):
        """Return a new mesh where boundary facets whose vertices all satisfy
        ``predicate(x) -> bool array`` carry tag ``name``."""
        bf = self.boundary_facets
        fv = self.vertices[self.facets[bf]]  # (nb, k, d)
        ok = np.all(predicate(fv.reshape(-1, self.dim)).reshape(fv.shape[:2]), axis=1)
        tags = dict(self.tags)
        prev = tags.get(name, np.zeros(0, dtype=np.int64))
        tags[name] = np.union1d(prev, bf[ok])
        return Mesh(self.vertices, self.cells, tags)

    def with_tags(self, tags):
        return Mesh(self.vertices, self.cells, tags)

    def tagged(self, *names):
        """Facet indices carrying any of the tags (prefix match on ``name:``)."""
        out = [np.zeros(0, dtype=np.int64)]
        for name in names:
            for k, v in self.tags.items():
                if k == name or k.startswith(name + ":"):
                    out.append(v)
        return np.unique(np.concatenate(out))

    def scaled(self, factor):
        return Mesh(self.vertices * factor, self.cells, self.tags)


# ---------------------------------------------------------------------------
# generators


def structured_square(m: int, lengths=(1.0, 1.0), ny=None) -> Mesh:
    """Unit square split into m x m quads, each cut along its (i,j)-(i+1,j+1) diagonal."""
    if m < 1:
        raise ValueError("m must be >= 1")
    nx, ny = m, (m if ny is None else ny)
    x = np.linspace(0.0, lengths[0], nx + 1)
    y = np.linspace(0.0, lengths[1], ny + 1)
    X, Y = np.meshgrid(x, y, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = lambda i, j: i + j * (nx + 1)
    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1)
            cells.append((a, b, d))
            cells.append((a, d, c))
    mesh = Mesh(verts, np.array(cells))
    return mesh.tag_facets(GAMMA1, lambda p: np.ones(len(p), dtype=bool))


_KUHN = [p for p in permutations(range(3))]


def structured_cube(m: int, lengths=(1.0, 1.0, 1.0), n=None) -> Mesh:
    """Unit cube, m^3 subcubes each split into 6 Kuhn tetrahedra around the main diagonal."""
    if m < 1:
        raise ValueError("m must be >= 1")
    nx, ny, nz = (m, m, m) if n is None else n
    xs = [np.linspace(0.0, L, k + 1) for L, k in zip(lengths, (nx, ny, nz))]
    X, Y, Z = np.meshgrid(*xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    idx = lambda i, j, k: (i * (ny + 1) + j) * (nz + 1) + k
    cells = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                for perm in _KUHN:
                    p = [i, j, k]
                    tet = [idx(*p)]
                    for axis in perm:
                        p[axis] += 1
                        tet.append(idx(*p))
                    cells.append(tet)
    mesh = Mesh(verts, np.array(cells))
    return mesh.tag_facets(GAMMA1, lambda p: np.ones(len(p), dtype=bool))


def perturbed(mesh: Mesh, amplitude: float, seed: int = 0) -> Mesh:
    """Jitter interior vertices by up to ``amplitude * h`` (irregular-mesh proxy)."""
    rng = np.random.default_rng(seed)
    bverts = np.unique(mesh.facets[mesh.boundary_facets])
    interior = np.setdiff1d(np.arange(len(mesh.vertices)), bverts)
    verts = mesh.vertices.copy()
    shift = rng.uniform(-1.0, 1.0, size=(len(interior), mesh.dim)) * amplitude * mesh.h / np.sqrt(mesh.dim)
    verts[interior] += shift
    return Mesh(verts, mesh.cells, mesh.tags)


COOK_CORNERS = ((0.0, 0.0), (48.0, 44.0), (48.0, 60.0), (0.0, 44.0))


def _cook_map(s, t, corners):
    (x0, y0), (x1, y1), (x2, y2), (x3, y3) = corners
    bx, by = x0 + s * (x1 - x0), y0 + s * (y1 - y0)
    tx, ty = x3 + s * (x2 - x3), y3 + s * (y2 - y3)
    return bx + t * (tx - bx), by + t * (ty - by)


def cook2d(nx: int, ny: int | None = None, corners=COOK_CORNERS) -> Mesh:
    ny = nx if ny is None else ny
    base = structured_square(nx, ny=ny)
    s, t = base.vertices[:, 0], base.vertices[:, 1]
    x, y = _cook_map(s, t, corners)
    mesh = Mesh(np.column_stack([x, y]), base.cells)
    xmax = max(c[0] for c in corners)
    tol = 1e-9 * xmax
    mesh = mesh.tag_facets(GAMMA1, lambda p: np.abs(p[:, 0]) < tol)
    mesh = mesh.tag_facets(GAMMA2 + ":tip", lambda p: np.abs(p[:, 0] - xmax) < tol)
    return _tag_rest(mesh, GAMMA2 + ":free")


def cook3d(nx: int, ny: int | None = None, nz: int = 1, thickness: float = 10.0,
           corners=COOK_CORNERS) -> Mesh:
    ny = nx if ny is None else ny
    base = structured_cube(1, n=(nx, ny, nz))
    s, t, z = base.vertices.T
    x, y = _cook_map(s, t, corners)
    mesh = Mesh(np.column_stack([x, y, z * thickness]), base.cells)
    xmax = max(c[0] for c in corners)
    tol = 1e-9 * xmax
    mesh = mesh.tag_facets(GAMMA1, lambda p: np.abs(p[:, 0]) < tol)
    mesh = mesh.tag_facets(GAMMA2 + ":tip", lambda p: np.abs(p[:, 0] - xmax) < tol)
    return _tag_rest(mesh, GAMMA2 + ":free")


def compression2d(nx: int, ny: int | None = None, width: float = 20.0, height: float = 10.0,
                  load_extent=(5.0, 15.0)) -> Mesh:
    """Block clamped horizontally on top and vertically on the bottom.

    Tags: ``top`` (horizontal fix), ``bottom`` (vertical fix), ``gamma2:load``
    (loaded part of the top edge), ``gamma2:free`` (everything else on the
    boundary that carries a traction, including the top).
    """
    ny = nx if ny is None else ny
    base = structured_square(nx, ny=ny)
    verts = base.vertices * np.array([width, height])
    mesh = Mesh(verts, base.cells)
    tol = 1e-9 * max(width, height)
    a, b = load_extent
    mesh = mesh.tag_facets("top", lambda p: np.abs(p[:, 1] - height) < tol)
    mesh = mesh.tag_facets("bottom", lambda p: np.abs(p[:, 1]) < tol)
    mesh = mesh.tag_facets(GAMMA2 + ":load", lambda p: (np.abs(p[:, 1] - height) < tol)
                           & (p[:, 0] >= a - tol) & (p[:, 0] <= b + tol))
    return mesh


def _tag_rest(mesh, name):
    used = np.unique(np.concatenate([v for v in mesh.tags.values()] + [np.zeros(0, dtype=np.int64)]))
    rest = np.setdiff1d(mesh.boundary_facets, used)
    tags = dict(mesh.tags)
    tags[name] = rest
    return mesh.with_tags(tags)


def benchmark_geometry(name: str, **params) -> Mesh:
    builders = {"cook2d": cook2d, "cook3d": cook3d, "compression2d": compression2d}
    try:
        builder = builders[name]
    except KeyError:
        raise ValueError(f"unknown geometry {name!r}; expected one of {sorted(builders)}") from None
    return builder(**params)


# ---------------------------------------------------------------------------
# plain-text format


def write_mesh(mesh: Mesh, path):
    lines = [f"{mesh.dim} {len(mesh.vertices)} {len(mesh.cells)}"]
    lines += [" ".join(repr(float(x)) for x in v) for v in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in c) for c in mesh.cells]
    entries = [(f, name) for name, ids in sorted(mesh.tags.items()) for f in ids]
    lines.append(f"tags {len(entries)}")
    for f, name in entries:
        lines.append(" ".join(str(int(i)) for i in mesh.facets[f]) + f" {name}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()
            and not ln.lstrip().startswith("#")]
    try:
        dim, nv, nc = (int(x) for x in rows[0])
        if dim not in (2, 3) or len(rows) < 1 + nv + nc + 1:
            raise MeshError("inconsistent counts")
        verts = np.array([[float(x) for x in r] for r in rows[1:1 + nv]])
        if verts.shape != (nv, dim):
            raise MeshError("bad vertex line")
        cells = np.array([[int(x) for x in r] for r in rows[1 + nv:1 + nv + nc]])
        if cells.shape != (nc, dim + 1):
            raise MeshError("bad cell line")
        head = rows[1 + nv + nc]
        if head[0] != "tags" or len(head) != 2:
            raise MeshError("missing tags section")
        ntag = int(head[1])
        tag_rows = rows[2 + nv + nc:]
        if len(tag_rows) != ntag:
            raise MeshError("inconsistent tag count")
    except (ValueError, IndexError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"malformed mesh file: {exc}") from exc
    mesh = Mesh(verts, cells)
    lookup = {tuple(f): i for i, f in enumerate(mesh.facets.tolist())}
    tags = {}
    for r in tag_rows:
        if len(r) != dim + 1:
            raise MeshError("bad tag line")
        key = tuple(sorted(int(x) for x in r[:dim]))
        if key not in lookup:
            raise MeshError(f"tag refers to unknown facet {key}")
        tags.setdefault(r[dim], []).append(lookup[key])
    return mesh.with_tags(tags)
