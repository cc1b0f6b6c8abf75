from math import factorial

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mixedelast.quadrature import facet_rule, quadrature_rule, reference_measure


def simplex_monomial(exps):
    """Integral of prod x_i^a_i over the reference simplex."""
    num = np.prod([factorial(a) for a in exps])
    return num / factorial(sum(exps) + len(exps))


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("degree", [0, 1, 4, 7])
def test_monomials_integrated_exactly(dim, degree):
    rule = quadrature_rule(dim, degree)
    assert_allclose(rule.weights.sum(), reference_measure(dim), rtol=1e-14)
    rng = np.random.default_rng(degree)
    for _ in range(5):
        exps = rng.multinomial(degree, np.ones(dim + 1) / (dim + 1))[:dim]
        approx = np.sum(rule.weights * np.prod(rule.points ** exps, axis=1))
        assert_allclose(approx, simplex_monomial(exps), rtol=1e-12)


def test_points_inside_reference_simplex():
    pts = quadrature_rule(3, 6).points
    assert np.all(pts >= 0) and np.all(pts.sum(axis=1) <= 1)


def test_rejects_unsupported_degree():
    with pytest.raises(ValueError):
        quadrature_rule(2, 99)
    with pytest.raises(ValueError):
        quadrature_rule(4, 1)


def test_facet_rule_averages():
    verts = np.array([[0.0, 0.0], [2.0, 1.0]])
    pts, bary, w = facet_rule(verts, 3)
    assert_allclose(w.sum(), 1.0)
    # mean of x^2 along the segment x = 2t
    assert_allclose(np.sum(w * pts[:, 0] ** 2), 4.0 / 3.0)
    assert_allclose(bary @ verts, pts)
