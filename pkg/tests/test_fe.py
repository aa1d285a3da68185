from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermoporo import assembly as asm
from thermoporo.fe import build_dof_map, edge_quadrature, p1_eval, p2_eval, quadrature
from thermoporo.mesh import build_unit_square


def monomial_integral(p, q):
    """Integral of x^p y^q over the reference triangle."""
    return factorial(p) * factorial(q) / factorial(p + q + 2)


@pytest.mark.parametrize("order", [2, 4, 6])
def test_quadrature_exact_on_monomials(order):
    rule = quadrature(order)
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - 0.5) < 1e-15
    x, y = rule.points.T
    for p in range(order + 1):
        for q in range(order + 1 - p):
            assert abs(rule.weights @ (x**p * y**q) - monomial_integral(p, q)) < 1e-15


def test_midpoint_rule_details():
    rule = quadrature(2)
    assert len(rule.points) == 3
    assert np.allclose(rule.weights, 1 / 6)
    x, y = rule.points.T
    assert rule.weights @ (x * y) == pytest.approx(1 / 24, abs=1e-17)


def test_order4_quartic():
    rule = quadrature(4)
    assert rule.weights @ rule.points[:, 0] ** 4 == pytest.approx(1 / 30, abs=1e-15)


def test_unsupported_order():
    with pytest.raises(ValueError):
        quadrature(3)


def test_edge_rule():
    s, w = edge_quadrature(3)
    for k in range(6):
        assert w @ s**k == pytest.approx(1 / (k + 1), abs=1e-15)


def test_p1_values():
    v, g = p1_eval([1 / 3, 1 / 3])
    assert np.allclose(v, 1 / 3)
    v, _ = p1_eval([0.0, 0.0])
    assert np.array_equal(v, [1.0, 0.0, 0.0])


P2_NODES = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]])


def test_p2_nodal():
    v, _ = p2_eval(P2_NODES)
    assert np.allclose(v, np.eye(6), atol=1e-15)


ref_points = st.tuples(st.floats(0, 1), st.floats(0, 1)).filter(lambda p: p[0] + p[1] <= 1)


@settings(max_examples=50, deadline=None)
@given(st.lists(ref_points, min_size=1, max_size=20))
def test_partition_of_unity(points):
    pts = np.array(points)
    for fn in (p1_eval, p2_eval):
        v, g = fn(pts)
        assert np.allclose(v.sum(axis=-1), 1.0, atol=1e-14)
        assert np.allclose(g.sum(axis=-2), 0.0, atol=1e-13)


def test_p2_gradients_by_finite_differences():
    pts = np.array([[0.2, 0.3], [0.6, 0.1], [0.05, 0.9]])
    _, g = p2_eval(pts)
    eps = 1e-6
    for d in range(2):
        shift = np.zeros(2)
        shift[d] = eps
        fd = (p2_eval(pts + shift)[0] - p2_eval(pts - shift)[0]) / (2 * eps)
        assert np.allclose(g[..., d], fd, atol=1e-8)


@pytest.mark.parametrize("n,n1,n2", [(1, 4, 9), (2, 9, 25), (3, 16, 49)])
def test_dof_counts(n, n1, n2):
    d = build_dof_map(build_unit_square(n))
    assert (d.n_p1, d.n_p2) == (n1, n2)
    off = d.offsets
    assert off["end"] == d.n_total == 2 * n2 + 3 * n1
    names = ["ux", "uy", "xi", "eta", "gamma"]
    sizes = [d.block(k).stop - d.block(k).start for k in names]
    assert sizes == [n2, n2, n1, n1, n1]


def test_edge_numbering_sorted_and_shared():
    d = build_dof_map(build_unit_square(3))
    assert np.all(d.edges[:, 0] < d.edges[:, 1])
    keys = d.edges[:, 0] * d.n_p1 + d.edges[:, 1]
    assert np.all(np.diff(keys) > 0)
    # midpoints are where the local node coordinates say they are
    v = d.mesh.vertices
    for tri, nodes in zip(d.mesh.triangles, d.cell_p2):
        for k, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
            assert np.allclose(d.p2_coords[nodes[3 + k]], 0.5 * (v[tri[a]] + v[tri[b]]))


def test_interpolant_of_x_squared_has_exact_gradient():
    ctx = asm.FEContext.from_mesh(build_unit_square(5))
    coeffs = asm.interpolate(lambda x, y: x**2, ctx, "p2")
    # evaluate gradient at (0.3, 0.3): find containing element through its quadrature map
    target = np.array([0.3, 0.3])
    lam = None
    for e, tri in enumerate(ctx.mesh.triangles):
        v = ctx.mesh.vertices[tri]
        J = np.column_stack([v[1] - v[0], v[2] - v[0]])
        ref = np.linalg.solve(J, target - v[0])
        if ref.min() >= -1e-12 and ref.sum() <= 1 + 1e-12:
            lam = (e, ref, J)
            break
    e, ref, J = lam
    _, g = p2_eval(ref)
    phys = g @ np.linalg.inv(J)
    grad = coeffs[ctx.dofs.cell_p2[e]] @ phys
    assert np.allclose(grad, [0.6, 0.0], atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_p2_reproduces_quadratics(c):
    def f(x, y):
        return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
    ctx = asm.FEContext.from_mesh(build_unit_square(3))
    coeffs = asm.interpolate(f, ctx, "p2")
    rng = np.random.default_rng(0)
    ref = rng.dirichlet(np.ones(3), size=10)[:, 1:]
    vals, _ = p2_eval(ref)
    for e in range(ctx.mesh.n_triangles):
        v = ctx.mesh.vertices[ctx.mesh.triangles[e]]
        J = np.column_stack([v[1] - v[0], v[2] - v[0]])
        xy = v[0] + ref @ J.T
        approx = vals @ coeffs[ctx.dofs.cell_p2[e]]
        assert np.max(np.abs(approx - f(xy[:, 0], xy[:, 1]))) < 1e-13 * max(1.0, max(map(abs, c)))
