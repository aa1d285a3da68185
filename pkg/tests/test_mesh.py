from collections import Counter

import numpy as np
import pytest

from thermoporo.mesh import Side, build_unit_square, side_of_point


@pytest.mark.parametrize("n,nv,nt,nb", [(1, 4, 2, 4), (2, 9, 8, 8), (5, 36, 50, 20)])
def test_counts(n, nv, nt, nb):
    m = build_unit_square(n)
    assert (m.n_vertices, m.n_triangles, len(m.boundary_edges)) == (nv, nt, nb)
    assert m.h == 1.0 / n


@pytest.mark.parametrize("n", [1, 2, 4, 7, 16])
def test_tiling_and_orientation(n):
    m = build_unit_square(n)
    areas = m.signed_areas()
    assert np.all(areas > 0)
    assert abs(areas.sum() - 1.0) < 1e-14


@pytest.mark.parametrize("n", [1, 3, 8])
def test_euler_characteristic_and_conformity(n):
    m = build_unit_square(n)
    V, E, F = m.n_vertices, len(m.edges()), m.n_triangles
    assert V - E + F == 1
    uses = Counter()
    for t in m.triangles:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            uses[tuple(sorted((t[a], t[b])))] += 1
    boundary = {tuple(sorted(e[:2])) for e in m.boundary_edges}
    for edge, count in uses.items():
        assert count == (1 if edge in boundary else 2)
    assert len(boundary) == 4 * n


def test_grid_coordinates_and_diagonal():
    n = 4
    m = build_unit_square(n)
    assert np.allclose(m.vertices * n, np.round(m.vertices * n))
    # every cell is split by the edge from (i/n, j/n) to ((i+1)/n, (j+1)/n)
    diag = {tuple(sorted(e)) for e in m.edges()
            if np.allclose(np.diff(m.vertices[list(e)], axis=0), 1.0 / n)}
    assert len(diag) == n * n


def test_boundary_edges_lie_on_their_side_and_run_counterclockwise():
    m = build_unit_square(3)
    for a, b, s in m.boundary_edges:
        pa, pb = m.vertices[a], m.vertices[b]
        side = Side(s)
        for p in (pa, pb):
            assert side_of_point(*p) is not None
        tangent = pb - pa
        normal = side.normal
        # outward normal is the tangent rotated clockwise for a counterclockwise boundary
        assert np.allclose(normal, np.array([tangent[1], -tangent[0]]) / np.linalg.norm(tangent))


def test_every_boundary_vertex_on_a_labelled_edge():
    m = build_unit_square(5)
    on_edge = set(m.boundary_edges[:, :2].ravel())
    for v, (x, y) in enumerate(m.vertices):
        if side_of_point(x, y) is not None:
            assert v in on_edge


@pytest.mark.parametrize("point,side", [((0.5, 0.0), Side.BOTTOM), ((1.0, 0.25), Side.RIGHT),
                                        ((0.3, 0.4), None), ((0.0, 0.0), Side.BOTTOM),
                                        ((1.0, 1.0), Side.RIGHT), ((0.0, 1.0), Side.TOP)])
def test_side_of_point(point, side):
    assert side_of_point(*point) is side


def test_rejects_empty_mesh():
    with pytest.raises(ValueError):
        build_unit_square(0)


def test_dump_format(tmp_path):
    m = build_unit_square(1)
    path = tmp_path / "mesh.txt"
    m.dump(path)
    lines = path.read_text().splitlines()
    kinds = Counter(line.split()[0] for line in lines)
    assert kinds == {"v": 4, "t": 2, "b": 4}
    assert "b 0 1 bottom" in lines
