"""Uniform triangulations of the unit square."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class Side(enum.IntEnum):
    """Geometric sides of the unit square.  The order is the corner tie-break."""
    BOTTOM = 0
    RIGHT = 1
    TOP = 2
    LEFT = 3

    @property
    def normal(self) -> np.ndarray:
        return _NORMALS[self]


_NORMALS = {
    Side.BOTTOM: np.array([0.0, -1.0]),
    Side.RIGHT: np.array([1.0, 0.0]),
    Side.TOP: np.array([0.0, 1.0]),
    Side.LEFT: np.array([-1.0, 0.0]),
}


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray        # (nv, 2)
    triangles: np.ndarray       # (nt, 3), counterclockwise
    boundary_edges: np.ndarray  # (nb, 3): v_start, v_end, side
    h: float

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs, lexicographically ordered."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def side_edges(self, side: Side) -> np.ndarray:
        sel = self.boundary_edges[:, 2] == int(side)
        return self.boundary_edges[sel, :2]

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for x, y in self.vertices:
                fh.write(f"v {x!r} {y!r}\n")
            for i, j, k in self.triangles:
                fh.write(f"t {i} {j} {k}\n")
            for i, j, s in self.boundary_edges:
                fh.write(f"b {i} {j} {Side(s).name.lower()}\n")


def build_unit_square(n: int) -> Mesh:
    """``n x n`` grid of cells, each split along its (i, j)-(i+1, j+1) diagonal."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    idx = np.arange(n + 1)
    X, Y = np.meshgrid(idx / n, idx / n)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    k = np.arange(n)
    bottom = np.column_stack([vid(k, 0), vid(k + 1, 0), np.full(n, Side.BOTTOM)])
    right = np.column_stack([vid(n, k), vid(n, k + 1), np.full(n, Side.RIGHT)])
    top = np.column_stack([vid(n - k, n), vid(n - k - 1, n), np.full(n, Side.TOP)])
    left = np.column_stack([vid(0, n - k), vid(0, n - k - 1), np.full(n, Side.LEFT)])
    boundary = np.concatenate([bottom, right, top, left]).astype(np.int64)
    return Mesh(vertices=vertices, triangles=triangles, boundary_edges=boundary, h=1.0 / n)


def side_of_point(x: float, y: float, tol: float = 1e-12) -> Side | None:
    """Boundary side containing ``(x, y)``; corners resolve to the smallest :class:`Side`."""
    for side, hit in ((Side.BOTTOM, abs(y) <= tol), (Side.RIGHT, abs(x - 1) <= tol),
                      (Side.TOP, abs(y - 1) <= tol), (Side.LEFT, abs(x) <= tol)):
        if hit:
            return side
    return None
