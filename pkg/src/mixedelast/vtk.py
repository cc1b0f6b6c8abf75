"""Legacy ASCII VTK output of a mixed state."""
from __future__ import annotations

from pathlib import Path

import numpy as np

CELL_TYPES = {2: 5, 3: 10}  # VTK_TRIANGLE, VTK_TETRA


def _pad3(a):
    """Pad trailing vector/tensor axes of size 2 to size 3."""
    a = np.asarray(a, dtype=float)
    if a.shape[-1] == 3:
        return a
    if a.ndim >= 2 and a.shape[-2:] == (2, 2):
        out = np.zeros(a.shape[:-2] + (3, 3))
        out[..., :2, :2] = a
        return out
    out = np.zeros(a.shape[:-1] + (3,))
    out[..., :2] = a
    return out


def sample_state(space, x):
    """Vertex values of U and centroid values of K, P and |P|_F."""
    mesh = space.mesh
    u, k, p = space.split(x)
    C, d = len(mesh.cells), mesh.dim
    cells = np.arange(C)
    ref = np.vstack([np.zeros(d), np.eye(d)])
    vals, _ = space.U.evaluate_at(u, cells, np.broadcast_to(ref, (C, d + 1, d)))
    U = np.zeros((len(mesh.vertices), d))
    U[space.U.sorted_cells.ravel()] = vals.reshape(-1, d)  # reference vertices follow sorted order
    centre = np.full((C, 1, d), 1.0 / (d + 1))
    K = space.K.evaluate_at(k, cells, centre)[0][:, 0]
    P = space.P.evaluate_at(p, cells, centre)[0][:, 0]
    return U, K, P, np.sqrt(np.einsum("cij,cij->c", P, P))


def export_vtk(space, x, path, title="mixed elasticity state"):
    """Write an unstructured grid with point field U and cell fields K, P, P_frobenius."""
    mesh = space.mesh
    U, K, P, Pf = sample_state(space, x)
    nv, C, d = len(mesh.vertices), len(mesh.cells), mesh.dim
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [" ".join(f"{v:.16e}" for v in row) for row in _pad3(mesh.vertices)]
    lines.append(f"CELLS {C} {C * (d + 2)}")
    lines += [f"{d + 1} " + " ".join(str(int(i)) for i in c) for c in mesh.cells]
    lines.append(f"CELL_TYPES {C}")
    lines += [str(CELL_TYPES[d])] * C
    lines += [f"POINT_DATA {nv}", "VECTORS U double"]
    lines += [" ".join(f"{v:.16e}" for v in row) for row in _pad3(U)]
    lines.append(f"CELL_DATA {C}")
    for name, T in (("K", K), ("P", P)):
        lines.append(f"TENSORS {name} double")
        for t in _pad3(T):
            lines += [" ".join(f"{v:.16e}" for v in r) for r in t]
    lines += ["SCALARS P_frobenius double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.16e}" for v in Pf]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_vtk(path):
    """Minimal reader for files produced by :func:`export_vtk`."""
    tokens = Path(path).read_text().split("\n")
    out, i = {}, 0
    while i < len(tokens):
        head = tokens[i].split()
        i += 1
        if not head:
            continue
        key = head[0]
        if key == "POINTS":
            n = int(head[1])
            out["points"] = np.loadtxt(tokens[i:i + n], ndmin=2)
            i += n
        elif key == "CELLS":
            n = int(head[1])
            rows = np.loadtxt(tokens[i:i + n], dtype=np.int64, ndmin=2)
            if np.any(rows[:, 0] != rows.shape[1] - 1) or rows.size != int(head[2]):
                raise ValueError("inconsistent CELLS section")
            out["cells"] = rows[:, 1:]
            i += n
        elif key == "CELL_TYPES":
            n = int(head[1])
            out["cell_types"] = np.array([int(t) for t in tokens[i:i + n]])
            i += n
        elif key == "VECTORS":
            n = len(out["points"])
            out[head[1]] = np.loadtxt(tokens[i:i + n], ndmin=2)
            i += n
        elif key == "TENSORS":
            n = len(out["cells"])
            out[head[1]] = np.loadtxt(tokens[i:i + 3 * n], ndmin=2).reshape(n, 3, 3)
            i += 3 * n
        elif key == "SCALARS":
            n = len(out["cells"])
            out[head[1]] = np.loadtxt(tokens[i + 1:i + 1 + n], ndmin=1)
            i += n + 1
    return out
