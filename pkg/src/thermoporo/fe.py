"""Reference-element Lagrange bases, triangle quadrature and Taylor-Hood dof maps.

Reference triangle: (0, 0), (1, 0), (0, 1).  Local P2 node order is the three
vertices followed by the midpoints of edges (0, 1), (1, 2), (2, 0).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import Mesh, Side


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray   # (Q, 2) reference coordinates
    weights: np.ndarray  # (Q,), sum = 1/2
    order: int


def _orbit3(a: float) -> list[tuple[float, float]]:
    b = 1.0 - 2.0 * a
    return [(a, a), (b, a), (a, b)]


def _orbit6(a: float, b: float) -> list[tuple[float, float]]:
    c = 1.0 - a - b
    return [(a, b), (b, a), (b, c), (c, b), (c, a), (a, c)]


@lru_cache(maxsize=None)
def quadrature(order: int = 4) -> QuadratureRule:
    """Symmetric triangle rule exact for polynomials of total degree ``order``.

    Order 2 is the edge-midpoint rule, orders 4 and 6 are Dunavant's 6- and
    12-point rules.
    """
    if order == 2:
        pts = [(0.5, 0.0), (0.5, 0.5), (0.0, 0.5)]
        wts = [1 / 3] * 3
    elif order == 4:
        pts = _orbit3(0.44594849091596488631832925388305) + _orbit3(0.091576213509770743459571463402202)
        wts = [0.22338158967801146569500700843312] * 3 + [0.10995174365532186763832632490021] * 3
    elif order == 6:
        pts = (_orbit3(0.24928674517091042129163855310702)
               + _orbit3(0.063089014491502228340331602870819)
               + _orbit6(0.053145049844816947353249671631398, 0.31035245103378440541660773395655))
        wts = ([0.11678627572637936602528961138558] * 3
               + [0.050844906370206816920936809106869] * 3
               + [0.082851075618373575193553456420442] * 6)
    else:
        raise ValueError(f"unsupported quadrature order {order}; choose 2, 4 or 6")
    points = np.array(pts, dtype=float)
    weights = 0.5 * np.array(wts, dtype=float)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, order)


@lru_cache(maxsize=None)
def edge_quadrature(npts: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def p1_eval(ref_points) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(..., 3)`` and gradients ``(..., 3, 2)`` of the linear basis."""
    pts = np.asarray(ref_points, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    vals = np.stack([1.0 - x - y, x, y], axis=-1)
    grads = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]),
                            pts.shape[:-1] + (3, 2)).copy()
    return vals, grads


def p2_eval(ref_points) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(..., 6)`` and gradients ``(..., 6, 2)`` of the quadratic basis."""
    pts = np.asarray(ref_points, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    L = np.stack([1.0 - x - y, x, y], axis=-1)
    dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    L0, L1, L2 = L[..., 0], L[..., 1], L[..., 2]
    vals = np.stack([L0 * (2 * L0 - 1), L1 * (2 * L1 - 1), L2 * (2 * L2 - 1),
                     4 * L0 * L1, 4 * L1 * L2, 4 * L2 * L0], axis=-1)
    g = np.empty(pts.shape[:-1] + (6, 2))
    for i in range(3):
        g[..., i, :] = (4 * L[..., i] - 1)[..., None] * dL[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        g[..., 3 + k, :] = 4 * (L[..., j][..., None] * dL[i] + L[..., i][..., None] * dL[j])
    return vals, g


P2_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering for vector P2 displacement and three P1 scalars.

    The global unknown vector is ``[u_x, u_y, xi, eta, gamma]``.
    """
    mesh: Mesh
    n_p1: int
    n_p2: int
    edges: np.ndarray      # (ne, 2) sorted vertex pairs
    cell_p2: np.ndarray    # (nt, 6)
    p2_coords: np.ndarray  # (n_p2, 2)

    @property
    def cell_p1(self) -> np.ndarray:
        return self.mesh.triangles

    @property
    def offsets(self) -> dict[str, int]:
        n1, n2 = self.n_p1, self.n_p2
        return {"ux": 0, "uy": n2, "xi": 2 * n2, "eta": 2 * n2 + n1,
                "gamma": 2 * n2 + 2 * n1, "end": 2 * n2 + 3 * n1}

    @property
    def n_total(self) -> int:
        return 2 * self.n_p2 + 3 * self.n_p1

    def block(self, name: str) -> slice:
        order = ["ux", "uy", "xi", "eta", "gamma", "end"]
        off = self.offsets
        return slice(off[name], off[order[order.index(name) + 1]])

    def edge_ids(self, pairs: np.ndarray) -> np.ndarray:
        """P2 node ids of the midpoints of the given vertex pairs."""
        pairs = np.sort(np.asarray(pairs), axis=1)
        key = pairs[:, 0] * self.n_p1 + pairs[:, 1]
        ekey = self.edges[:, 0] * self.n_p1 + self.edges[:, 1]
        pos = np.searchsorted(ekey, key)
        if np.any(ekey[pos] != key):
            raise KeyError("edge not in mesh")
        return self.n_p1 + pos

    def side_p2_nodes(self, side: Side) -> np.ndarray:
        be = self.mesh.side_edges(side)
        return np.unique(np.concatenate([be.ravel(), self.edge_ids(be)]))

    def side_p1_nodes(self, side: Side) -> np.ndarray:
        return np.unique(self.mesh.side_edges(side).ravel())


def build_dof_map(mesh: Mesh) -> DofMap:
    edges = mesh.edges()
    n_p1 = mesh.n_vertices
    t = mesh.triangles
    local = np.stack([t[:, list(e)] for e in P2_LOCAL_EDGES], axis=1)  # (nt, 3, 2)
    local.sort(axis=2)
    key = local[..., 0] * n_p1 + local[..., 1]
    ekey = edges[:, 0] * n_p1 + edges[:, 1]
    mids = n_p1 + np.searchsorted(ekey, key)
    cell_p2 = np.concatenate([t, mids], axis=1)
    coords = np.concatenate([mesh.vertices, 0.5 * mesh.vertices[edges].sum(axis=1)])
    return DofMap(mesh=mesh, n_p1=n_p1, n_p2=n_p1 + len(edges), edges=edges,
                  cell_p2=cell_p2, p2_coords=coords)


@dataclass(frozen=True, eq=False)
class Geometry:
    """Affine maps of all triangles: x = x0 + J @ xhat."""
    x0: np.ndarray     # (nt, 2)
    J: np.ndarray      # (nt, 2, 2)
    det: np.ndarray    # (nt,)
    invT: np.ndarray   # (nt, 2, 2): J^{-T}

    @property
    def area(self) -> np.ndarray:
        return 0.5 * self.det

    def map_points(self, ref_points: np.ndarray) -> np.ndarray:
        """Physical coordinates ``(nt, Q, 2)`` of reference points ``(Q, 2)``."""
        return self.x0[:, None, :] + np.einsum("eij,qj->eqi", self.J, ref_points)

    def physical_gradients(self, ref_grads: np.ndarray) -> np.ndarray:
        """Map reference gradients ``(Q, nb, 2)`` to ``(nt, Q, nb, 2)``."""
        return np.einsum("eij,qbj->eqbi", self.invT, ref_grads)


def element_geometry(mesh: Mesh) -> Geometry:
    p = mesh.vertices[mesh.triangles]
    x0 = p[:, 0]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1]
    inv[:, 1, 1] = J[:, 0, 0]
    inv[:, 0, 1] = -J[:, 0, 1]
    inv[:, 1, 0] = -J[:, 1, 0]
    inv /= det[:, None, None]
    return Geometry(x0=x0, J=J, det=det, invT=np.transpose(inv, (0, 2, 1)).copy())
