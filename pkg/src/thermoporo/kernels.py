"""Batched element kernels.

Every kernel exists twice: an explicit-loop version compiled with numba and
a vectorised numpy version.  ``THERMOPORO_NUMBA=0`` in the environment (or
numba being unavailable) selects numpy at import time; :func:`set_backend`
switches at run time.  Both paths must agree to rounding.

Array conventions: ``E`` elements, ``Q`` quadrature points, ``wdet[e, q]`` is
the quadrature weight times the Jacobian determinant.  Vector P2 local dofs
are ordered ``[x-components of 6 nodes, y-components of 6 nodes]``.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

_backend = "numba" if _HAVE_NUMBA and os.environ.get("THERMOPORO_NUMBA", "1") != "0" else "numpy"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def _njit(fn):
    if not _HAVE_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)


# --- numba -----------------------------------------------------------------

@_njit
def _elasticity_nb(G, wdet, mu):
    E, Q, nb, _ = G.shape
    out = np.zeros((E, 2 * nb, 2 * nb))
    for e in range(E):
        for q in range(Q):
            w = 0.5 * mu * wdet[e, q]
            for a in range(nb):
                ax = G[e, q, a, 0]
                ay = G[e, q, a, 1]
                for b in range(nb):
                    bx = G[e, q, b, 0]
                    by = G[e, q, b, 1]
                    dot = ax * bx + ay * by
                    out[e, a, b] += w * (dot + ax * bx)
                    out[e, a, nb + b] += w * ay * bx
                    out[e, nb + a, b] += w * ax * by
                    out[e, nb + a, nb + b] += w * (dot + ay * by)
    return out


@_njit
def _divdiv_nb(G, wdet):
    E, Q, nb, _ = G.shape
    out = np.zeros((E, 2 * nb, 2 * nb))
    for e in range(E):
        for q in range(Q):
            w = wdet[e, q]
            for c in range(2):
                for a in range(nb):
                    da = G[e, q, a, c]
                    for d in range(2):
                        for b in range(nb):
                            out[e, c * nb + a, d * nb + b] += w * da * G[e, q, b, d]
    return out


@_njit
def _div_coupling_nb(G, phi, wdet):
    E, Q, nb, _ = G.shape
    ns = phi.shape[1]
    out = np.zeros((E, ns, 2 * nb))
    for e in range(E):
        for q in range(Q):
            w = wdet[e, q]
            for j in range(ns):
                wj = w * phi[q, j]
                for c in range(2):
                    for a in range(nb):
                        out[e, j, c * nb + a] += wj * G[e, q, a, c]
    return out


@_njit
def _p1_stiffness_nb(g, area, tensor):
    E = g.shape[0]
    out = np.zeros((E, 3, 3))
    for e in range(E):
        for j in range(3):
            t0 = tensor[0, 0] * g[e, j, 0] + tensor[0, 1] * g[e, j, 1]
            t1 = tensor[1, 0] * g[e, j, 0] + tensor[1, 1] * g[e, j, 1]
            for i in range(3):
                out[e, i, j] = area[e] * (g[e, i, 0] * t0 + g[e, i, 1] * t1)
    return out


@_njit
def _convection_nb(g, area, w):
    E = g.shape[0]
    out = np.zeros((E, 3, 3))
    for e in range(E):
        s = area[e] / 3.0
        for j in range(3):
            v = s * (g[e, j, 0] * w[e, 0] + g[e, j, 1] * w[e, 1])
            for z in range(3):
                out[e, z, j] = v
    return out


@_njit
def _load_nb(phi, fvals, wdet):
    E, Q = fvals.shape
    nb = phi.shape[1]
    out = np.zeros((E, nb))
    for e in range(E):
        for q in range(Q):
            wf = wdet[e, q] * fvals[e, q]
            for a in range(nb):
                out[e, a] += wf * phi[q, a]
    return out


# --- numpy -----------------------------------------------------------------

def _elasticity_np(G, wdet, mu):
    E, _, nb, _ = G.shape
    w = 0.5 * mu * wdet
    dot = np.einsum("eq,eqai,eqbi->eab", w, G, G)
    # cross[e, c, d, a, b] = sum_q w * G[a, d] * G[b, c]
    cross = np.einsum("eq,eqad,eqbc->ecdab", w, G, G)
    out = np.empty((E, 2 * nb, 2 * nb))
    for c in range(2):
        for d in range(2):
            blk = cross[:, c, d]
            if c == d:
                blk = blk + dot
            out[:, c * nb:(c + 1) * nb, d * nb:(d + 1) * nb] = blk
    return out


def _divdiv_np(G, wdet):
    E, _, nb, _ = G.shape
    D = np.concatenate([G[..., 0], G[..., 1]], axis=2)  # (E, Q, 2nb)
    return np.einsum("eq,eqa,eqb->eab", wdet, D, D)


def _div_coupling_np(G, phi, wdet):
    D = np.concatenate([G[..., 0], G[..., 1]], axis=2)
    return np.einsum("eq,qj,eqa->eja", wdet, phi, D)


def _p1_stiffness_np(g, area, tensor):
    return area[:, None, None] * np.einsum("eik,kl,ejl->eij", g, tensor, g)


def _convection_np(g, area, w):
    col = (area / 3.0)[:, None] * np.einsum("ejk,ek->ej", g, w)
    return np.broadcast_to(col[:, None, :], (len(g), 3, 3)).copy()


def _load_np(phi, fvals, wdet):
    return np.einsum("eq,qa->ea", wdet * fvals, phi)


_IMPL = {
    "numba": {"elasticity": _elasticity_nb, "divdiv": _divdiv_nb, "div_coupling": _div_coupling_nb,
              "p1_stiffness": _p1_stiffness_nb, "convection": _convection_nb, "load": _load_nb},
    "numpy": {"elasticity": _elasticity_np, "divdiv": _divdiv_np, "div_coupling": _div_coupling_np,
              "p1_stiffness": _p1_stiffness_np, "convection": _convection_np, "load": _load_np},
}


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def elasticity_local(G, wdet, mu, backend=None):
    """``mu * (eps(u), eps(v))`` on each element for vector basis gradients ``G``."""
    return _IMPL[backend or _backend]["elasticity"](_c(G), _c(wdet), float(mu))


def divdiv_local(G, wdet, backend=None):
    """``(div u, div v)`` on each element."""
    return _IMPL[backend or _backend]["divdiv"](_c(G), _c(wdet))


def div_coupling_local(G, phi, wdet, backend=None):
    """``(phi_j, div v)`` for scalar basis values ``phi`` ``(Q, ns)``; shape ``(E, ns, 2nb)``."""
    return _IMPL[backend or _backend]["div_coupling"](_c(G), _c(phi), _c(wdet))


def p1_stiffness_local(g, area, tensor, backend=None):
    """``(tensor grad phi_j, grad phi_i)`` for constant P1 gradients ``g`` ``(E, 3, 2)``."""
    return _IMPL[backend or _backend]["p1_stiffness"](_c(g), _c(area), _c(tensor))


def convection_local(g, area, w, backend=None):
    """``((grad phi_j . w_e), phi_z)`` with ``w`` constant per element; entry ``[e, z, j]``."""
    return _IMPL[backend or _backend]["convection"](_c(g), _c(area), _c(w))


def load_local(phi, fvals, wdet, backend=None):
    """``(f, phi_a)`` per element from values ``fvals[e, q]``."""
    return _IMPL[backend or _backend]["load"](_c(phi), _c(fvals), _c(wdet))


def p1_mass_local(area) -> np.ndarray:
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return area[:, None, None] * ref
