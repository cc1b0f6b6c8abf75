"""Quadrature on reference simplices.

Rules are collapsed (Duffy / Stroud conical product) Gauss-Jacobi rules,
so any exactness degree can be produced.  The catalog is capped at
``MAX_DEGREE`` to keep the contract explicit.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 20


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    points: np.ndarray  # (q, dim) reference coordinates
    weights: np.ndarray  # (q,), sums to the reference simplex measure
    degree: int

    def __len__(self):
        return len(self.weights)


def _gauss_jacobi01(n, alpha):
    """n-point Gauss-Jacobi rule for the weight (1-t)^alpha on [0, 1]."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def quadrature_rule(dim: int, degree: int) -> QuadratureRule:
    """Rule on the reference simplex exact for polynomials of total degree ``degree``."""
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported simplex dimension {dim}")
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"quadrature degree {degree} outside catalog [0, {MAX_DEGREE}]")
    n = max(1, (degree + 2) // 2)
    if dim == 1:
        t, w = _gauss_jacobi01(n, 0.0)
        return QuadratureRule(1, t[:, None], w, degree)
    if dim == 2:
        # (u, v) -> (u (1 - v), v); Jacobian (1 - v) absorbed by the Jacobi weight
        u, wu = _gauss_jacobi01(n, 0.0)
        v, wv = _gauss_jacobi01(n, 1.0)
        U, V = np.meshgrid(u, v, indexing="ij")
        W = np.outer(wu, wv)
        pts = np.column_stack([(U * (1 - V)).ravel(), V.ravel()])
        return QuadratureRule(2, pts, W.ravel(), degree)
    u, wu = _gauss_jacobi01(n, 0.0)
    v, wv = _gauss_jacobi01(n, 1.0)
    s, ws = _gauss_jacobi01(n, 2.0)
    U, V, S = np.meshgrid(u, v, s, indexing="ij")
    W = wu[:, None, None] * wv[None, :, None] * ws[None, None, :]
    x = U * (1 - V) * (1 - S)
    y = V * (1 - S)
    pts = np.column_stack([x.ravel(), y.ravel(), S.ravel()])
    return QuadratureRule(3, pts, W.ravel(), degree)


def reference_measure(dim: int) -> float:
    return {1: 1.0, 2: 0.5, 3: 1.0 / 6.0}[dim]


def facet_rule(vertices: np.ndarray, degree: int):
    """Points on the simplex spanned by ``vertices`` plus barycentric coords.

    Returns ``(points, bary, weights)`` where weights are normalized to sum
    to one, i.e. integrals are facet averages.
    """
    vertices = np.asarray(vertices, dtype=float)
    k = len(vertices) - 1
    if k == 0:
        return vertices.copy(), np.ones((1, 1)), np.ones(1)
    rule = quadrature_rule(k, degree)
    ref = rule.points
    bary = np.column_stack([1.0 - ref.sum(axis=1), ref])
    pts = bary @ vertices
    return pts, bary, rule.weights / reference_measure(k)
