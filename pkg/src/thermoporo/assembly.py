"""Global sparse operators and load vectors for the Taylor-Hood discretisation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .fe import DofMap, Geometry, build_dof_map, edge_quadrature, element_geometry, p1_eval, p2_eval, quadrature
from .mesh import Mesh, Side


@dataclass(frozen=True, eq=False)
class FEContext:
    """Mesh plus everything precomputed at volume quadrature points."""
    mesh: Mesh
    dofs: DofMap
    geom: Geometry
    qorder: int
    qpoints: np.ndarray   # (Q, 2) reference
    wdet: np.ndarray      # (E, Q)
    xq: np.ndarray        # (E, Q, 2) physical points
    phi1: np.ndarray      # (Q, 3)
    phi2: np.ndarray      # (Q, 6)
    grad1: np.ndarray     # (E, 3, 2), constant per element
    grad2: np.ndarray     # (E, Q, 6, 2)

    @classmethod
    def from_mesh(cls, mesh: Mesh, qorder: int = 4) -> "FEContext":
        rule = quadrature(qorder)
        geom = element_geometry(mesh)
        phi1, g1 = p1_eval(rule.points)
        phi2, g2 = p2_eval(rule.points)
        return cls(
            mesh=mesh, dofs=build_dof_map(mesh), geom=geom, qorder=qorder,
            qpoints=rule.points, wdet=geom.det[:, None] * rule.weights[None, :],
            xq=geom.map_points(rule.points), phi1=phi1, phi2=phi2,
            grad1=geom.physical_gradients(g1[:1])[:, 0], grad2=geom.physical_gradients(g2),
        )

    @property
    def area(self) -> np.ndarray:
        return self.geom.area

    def with_order(self, qorder: int) -> "FEContext":
        if qorder == self.qorder:
            return self
        return FEContext.from_mesh(self.mesh, qorder)


def as_context(obj) -> FEContext:
    return obj if isinstance(obj, FEContext) else FEContext.from_mesh(obj)


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    mat = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _vec_p2_dofs(ctx: FEContext) -> np.ndarray:
    n2 = ctx.dofs.n_p2
    return np.concatenate([ctx.dofs.cell_p2, ctx.dofs.cell_p2 + n2], axis=1)


def _check_spd(tensor) -> np.ndarray:
    t = np.asarray(tensor, dtype=float)
    if t.ndim == 0:
        t = t * np.eye(2)
    if t.shape != (2, 2) or not np.allclose(t, t.T) or np.linalg.eigvalsh(t).min() <= 0:
        raise ValueError("tensor must be a symmetric positive definite 2x2 matrix")
    return t


def mass_p1(mesh_or_ctx) -> sp.csr_matrix:
    ctx = as_context(mesh_or_ctx)
    n1 = ctx.dofs.n_p1
    cells = ctx.dofs.cell_p1
    return _scatter(kernels.p1_mass_local(ctx.area), cells, cells, (n1, n1))


def mass_p2(mesh_or_ctx) -> sp.csr_matrix:
    """Scalar P2 Gram matrix."""
    ctx = as_context(mesh_or_ctx)
    n2 = ctx.dofs.n_p2
    local = np.einsum("eq,qa,qb->eab", ctx.wdet, ctx.phi2, ctx.phi2)
    return _scatter(local, ctx.dofs.cell_p2, ctx.dofs.cell_p2, (n2, n2))


def stiffness_p1(mesh_or_ctx, tensor) -> sp.csr_matrix:
    ctx = as_context(mesh_or_ctx)
    t = _check_spd(tensor)
    n1 = ctx.dofs.n_p1
    cells = ctx.dofs.cell_p1
    return _scatter(kernels.p1_stiffness_local(ctx.grad1, ctx.area, t), cells, cells, (n1, n1))


def elasticity_p2(mesh_or_ctx, mu: float) -> sp.csr_matrix:
    """``mu * (eps(u), eps(v))`` on vector P2 (no factor 2)."""
    ctx = as_context(mesh_or_ctx)
    n = 2 * ctx.dofs.n_p2
    dofs = _vec_p2_dofs(ctx)
    return _scatter(kernels.elasticity_local(ctx.grad2, ctx.wdet, mu), dofs, dofs, (n, n))


def divdiv_p2(mesh_or_ctx) -> sp.csr_matrix:
    ctx = as_context(mesh_or_ctx)
    n = 2 * ctx.dofs.n_p2
    dofs = _vec_p2_dofs(ctx)
    return _scatter(kernels.divdiv_local(ctx.grad2, ctx.wdet), dofs, dofs, (n, n))


def div_coupling(mesh_or_ctx) -> sp.csr_matrix:
    """``B[j, v] = (phi_j, div v)``; shape ``(n_p1, 2 n_p2)``."""
    ctx = as_context(mesh_or_ctx)
    local = kernels.div_coupling_local(ctx.grad2, ctx.phi1, ctx.wdet)
    return _scatter(local, ctx.dofs.cell_p1, _vec_p2_dofs(ctx), (ctx.dofs.n_p1, 2 * ctx.dofs.n_p2))


def p1_gradients(ctx: FEContext, coeffs: np.ndarray) -> np.ndarray:
    """Elementwise constant gradient ``(E, 2)`` of a P1 field."""
    return np.einsum("eaj,ea->ej", ctx.grad1, np.asarray(coeffs)[ctx.dofs.cell_p1])


def cutoff(vectors: np.ndarray, N: float | None) -> np.ndarray:
    """Clamp vector magnitudes to ``N``; identity when ``N`` is None."""
    if N is None:
        return vectors
    norm = np.linalg.norm(vectors, axis=-1, keepdims=True)
    scale = np.where(norm > N, N / np.where(norm > 0, norm, 1.0), 1.0)
    return vectors * scale


def convection_forms(mesh_or_ctx, T_coeffs, p_coeffs, K, cutoff_N: float | None = None):
    """Newton pieces of ``(grad T . K grad p, z)`` frozen at ``(T_coeffs, p_coeffs)``.

    Returns ``(C_T, C_p, b_c)`` with ``C_T @ T = (grad T . w, z)`` for
    ``w = N(K grad p_frozen)``, ``C_p @ p = (N(grad T_frozen) . K grad p, z)``
    and ``b_c = (N(grad T_frozen) . N(K grad p_frozen), z)``.
    """
    ctx = as_context(mesh_or_ctx)
    n1 = ctx.dofs.n_p1
    T_coeffs = np.asarray(T_coeffs, dtype=float)
    p_coeffs = np.asarray(p_coeffs, dtype=float)
    if T_coeffs.shape != (n1,) or p_coeffs.shape != (n1,):
        raise ValueError(f"expected P1 fields of length {n1}, got {T_coeffs.shape} and {p_coeffs.shape}")
    K = _check_spd(K)
    cells = ctx.dofs.cell_p1
    w_p = cutoff(p1_gradients(ctx, p_coeffs) @ K.T, cutoff_N)
    g_T = cutoff(p1_gradients(ctx, T_coeffs), cutoff_N)
    C_T = _scatter(kernels.convection_local(ctx.grad1, ctx.area, w_p), cells, cells, (n1, n1))
    C_p = _scatter(kernels.convection_local(ctx.grad1, ctx.area, g_T @ K), cells, cells, (n1, n1))
    local_b = np.repeat((ctx.area / 3.0 * np.einsum("ej,ej->e", g_T, w_p))[:, None], 3, axis=1)
    b_c = np.bincount(cells.ravel(), weights=local_b.ravel(), minlength=n1)
    return C_T, C_p, b_c


def volume_load(mesh_or_ctx, f: Callable, t: float, space: str = "p1") -> np.ndarray:
    """``(f, basis)``.  ``space`` is ``"p1"``, ``"p2"`` (scalar) or ``"p2vec"``.

    ``f(x, y, t)`` is evaluated on arrays; for ``"p2vec"`` it returns ``(fx, fy)``.
    """
    ctx = as_context(mesh_or_ctx)
    x, y = ctx.xq[..., 0], ctx.xq[..., 1]
    if space == "p1":
        vals = np.broadcast_to(f(x, y, t), x.shape)
        loc = kernels.load_local(ctx.phi1, vals, ctx.wdet)
        return np.bincount(ctx.dofs.cell_p1.ravel(), weights=loc.ravel(), minlength=ctx.dofs.n_p1)
    if space == "p2":
        vals = np.broadcast_to(f(x, y, t), x.shape)
        loc = kernels.load_local(ctx.phi2, vals, ctx.wdet)
        return np.bincount(ctx.dofs.cell_p2.ravel(), weights=loc.ravel(), minlength=ctx.dofs.n_p2)
    if space == "p2vec":
        fx, fy = f(x, y, t)
        out = []
        for comp in (fx, fy):
            vals = np.broadcast_to(comp, x.shape)
            loc = kernels.load_local(ctx.phi2, vals, ctx.wdet)
            out.append(np.bincount(ctx.dofs.cell_p2.ravel(), weights=loc.ravel(), minlength=ctx.dofs.n_p2))
        return np.concatenate(out)
    raise ValueError(f"unknown space {space!r}")


def boundary_load(mesh_or_ctx, g: Callable, sides: Iterable[Side], t: float,
                  space: str = "p1", npts: int = 3) -> np.ndarray:
    """``<g, basis>`` over the listed sides with Gauss quadrature on each edge.

    ``g(x, y, t, n)`` receives the outward unit normal ``n`` of the side; for
    ``"p2vec"`` it returns ``(gx, gy)``.
    """
    ctx = as_context(mesh_or_ctx)
    dofs = ctx.dofs
    s, w = edge_quadrature(npts)
    if space == "p1":
        basis = np.stack([1 - s, s], axis=1)
        out = np.zeros(dofs.n_p1)
    elif space in ("p2", "p2vec"):
        basis = np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=1)
        out = np.zeros(dofs.n_p2 if space == "p2" else 2 * dofs.n_p2)
    else:
        raise ValueError(f"unknown space {space!r}")
    verts = ctx.mesh.vertices
    for side in sides:
        side = Side(side)
        edges = ctx.mesh.side_edges(side)
        if len(edges) == 0:
            continue
        a, b = verts[edges[:, 0]], verts[edges[:, 1]]
        length = np.linalg.norm(b - a, axis=1)
        pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]   # (ne, S, 2)
        vals = g(pts[..., 0], pts[..., 1], t, side.normal)
        ids = edges if space == "p1" else np.column_stack([edges, dofs.edge_ids(edges)])
        comps = [vals] if space != "p2vec" else list(vals)
        for c, comp in enumerate(comps):
            comp = np.broadcast_to(comp, pts.shape[:2])
            loc = np.einsum("es,s,sa->ea", comp * length[:, None], w, basis)
            np.add.at(out, ids + c * dofs.n_p2, loc)
    return out


def interpolate(fn: Callable, mesh_or_ctx, space: str = "p1") -> np.ndarray:
    """Nodal interpolant.  ``fn(x, y)``; for ``"p2vec"`` it returns ``(fx, fy)``."""
    ctx = as_context(mesh_or_ctx)
    if space == "p1":
        xy = ctx.mesh.vertices
        return np.broadcast_to(np.asarray(fn(xy[:, 0], xy[:, 1]), dtype=float), (len(xy),)).copy()
    xy = ctx.dofs.p2_coords
    if space == "p2":
        return np.broadcast_to(np.asarray(fn(xy[:, 0], xy[:, 1]), dtype=float), (len(xy),)).copy()
    if space == "p2vec":
        fx, fy = fn(xy[:, 0], xy[:, 1])
        n = len(xy)
        return np.concatenate([np.broadcast_to(fx, (n,)), np.broadcast_to(fy, (n,))]).astype(float)
    raise ValueError(f"unknown space {space!r}")


def l2_project(fn: Callable, mesh_or_ctx, space: str = "p1") -> np.ndarray:
    """L2 projection of ``fn(x, y)`` onto P1 or scalar P2."""
    ctx = as_context(mesh_or_ctx)
    if space == "p1":
        M = mass_p1(ctx)
    elif space == "p2":
        M = mass_p2(ctx)
    else:
        raise ValueError(f"unknown space {space!r}")
    rhs = volume_load(ctx, lambda x, y, t: fn(x, y), 0.0, space)
    return spla.splu(M.tocsc()).solve(rhs)


def project_divergence(ctx: FEContext, u: np.ndarray, M1=None, B=None) -> np.ndarray:
    """P1 L2 projection of ``div u`` for a vector P2 field ``u``."""
    M1 = mass_p1(ctx) if M1 is None else M1
    B = div_coupling(ctx) if B is None else B
    return spla.splu(M1.tocsc()).solve(B @ u)
