"""The four benchmark problems on the unit square.

Manufactured data (body force, sources, traction, fluxes) are generated from
the closed-form solution with sympy, using the operator the scheme actually
discretises:

    -mu div eps(u) - lambda grad div u + alpha grad p + beta grad T = f
    d/dt(c0 p - b0 T + alpha div u) - div(K grad p) = g
    d/dt(a0 T - b0 p + beta div u) - grad T . K grad p - div(Theta grad T) = phi

with traction ``(mu eps(u) + lambda div u I - (alpha p + beta T) I) n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import sympy as sp

from .coeffs import PhysicalParams
from .mesh import Side

ScalarFn = Callable  # f(x, y, t) -> array
BoundaryFn = Callable  # f(x, y, t, n) -> array or (array, array)


@dataclass(frozen=True, eq=False)
class BCSpec:
    """Boundary treatment per geometric side.

    Anything not listed as Dirichlet is natural: traction for the displacement
    components, ``g1``/``phi1`` fluxes for pressure and temperature.  Missing
    natural data means homogeneous.
    """
    u_dirichlet: Mapping[Side, Mapping[int, ScalarFn]] = field(default_factory=dict)
    p_dirichlet: Mapping[Side, ScalarFn] = field(default_factory=dict)
    T_dirichlet: Mapping[Side, ScalarFn] = field(default_factory=dict)
    traction: BoundaryFn | None = None
    g1: BoundaryFn | None = None
    phi1: BoundaryFn | None = None

    def u_natural_sides(self, comp: int) -> list[Side]:
        return [s for s in Side if comp not in self.u_dirichlet.get(s, {})]

    def p_natural_sides(self) -> list[Side]:
        return [s for s in Side if s not in self.p_dirichlet]

    def T_natural_sides(self) -> list[Side]:
        return [s for s in Side if s not in self.T_dirichlet]


@dataclass(frozen=True, eq=False)
class ExactSolution:
    u: Callable        # (x, y, t) -> (ux, uy)
    grad_u: Callable   # (x, y, t) -> ((dux/dx, dux/dy), (duy/dx, duy/dy))
    p: Callable
    grad_p: Callable
    T: Callable
    grad_T: Callable


def _zero(x, y, t, *rest):
    return np.zeros(np.broadcast(x, y).shape)


def _zero_vec(x, y, t, *rest):
    z = np.zeros(np.broadcast(x, y).shape)
    return z, z


@dataclass(frozen=True, eq=False)
class CaseSpec:
    name: str
    params: PhysicalParams
    f: Callable = _zero_vec
    g: Callable = _zero
    phi: Callable = _zero
    bc: BCSpec = field(default_factory=BCSpec)
    u0: Callable = lambda x, y: _zero_vec(x, y, 0.0)
    p0: Callable = lambda x, y: _zero(x, y, 0.0)
    T0: Callable = lambda x, y: _zero(x, y, 0.0)
    exact: ExactSolution | None = None
    tau: float = 1.0
    dt: float = 1e-2
    gamma_sides: Mapping[int, Side] = field(default_factory=dict)
    relaxed: bool = False


# --- symbolic manufacturing ----------------------------------------------

_x, _y, _t = sp.symbols("x y t", real=True)
_nx, _ny = sp.symbols("n_x n_y", real=True)


def _lambdify(expr) -> Callable:
    fn = sp.lambdify((_x, _y, _t), expr, "numpy")

    def wrapped(x, y, t):
        return np.broadcast_to(np.asarray(fn(x, y, t), dtype=float), np.broadcast(x, y).shape) + 0.0
    return wrapped


def _lambdify_vec(exprs) -> Callable:
    parts = [_lambdify(e) for e in exprs]

    def wrapped(x, y, t):
        return tuple(p(x, y, t) for p in parts)
    return wrapped


def _lambdify_boundary(exprs, vector: bool) -> Callable:
    fns = [sp.lambdify((_x, _y, _t, _nx, _ny), e, "numpy") for e in exprs]

    def wrapped(x, y, t, n):
        shape = np.broadcast(x, y).shape
        out = tuple(np.broadcast_to(np.asarray(f(x, y, t, n[0], n[1]), dtype=float), shape) + 0.0
                    for f in fns)
        return out if vector else out[0]
    return wrapped


def _exact(v: float) -> sp.Rational:
    return sp.nsimplify(float(v), rational=True)


def strong_form_data(params: PhysicalParams, u_expr, p_expr, T_expr) -> dict[str, sp.Expr]:
    """Sources and boundary fluxes implied by an exact solution, as sympy expressions."""
    mu, lam = _exact(params.mu), _exact(params.lam)
    a0, b0, c0 = (_exact(v) for v in (params.a0, params.b0, params.c0))
    al, be = _exact(params.alpha), _exact(params.beta)
    K = sp.Matrix(2, 2, [_exact(v) for v in params.K.ravel()])
    Th = sp.Matrix(2, 2, [_exact(v) for v in params.Theta.ravel()])
    X = (_x, _y)
    u = sp.Matrix(u_expr)
    grad_u = sp.Matrix(2, 2, lambda i, j: sp.diff(u[i], X[j]))
    eps = (grad_u + grad_u.T) / 2
    q = grad_u.trace()
    xi = al * p_expr + be * T_expr - lam * q
    div_eps = sp.Matrix([sum(sp.diff(eps[i, j], X[j]) for j in range(2)) for i in range(2)])
    grad = lambda s: sp.Matrix([sp.diff(s, X[0]), sp.diff(s, X[1])])  # noqa: E731
    div = lambda v: sp.diff(v[0], X[0]) + sp.diff(v[1], X[1])  # noqa: E731
    f = -mu * div_eps + grad(xi)
    Kgp = K * grad(p_expr)
    TgT = Th * grad(T_expr)
    g = sp.diff(c0 * p_expr - b0 * T_expr + al * q, _t) - div(Kgp)
    phi = (sp.diff(a0 * T_expr - b0 * p_expr + be * q, _t) - (grad(T_expr).T * Kgp)[0] - div(TgT))
    n = sp.Matrix([_nx, _ny])
    traction = (mu * eps - xi * sp.eye(2)) * n
    return {"f": [f[0], f[1]], "g": g, "phi": phi, "traction": [traction[0], traction[1]],
            "g1": (Kgp.T * n)[0], "phi1": (TgT.T * n)[0],
            "grad_u": grad_u, "grad_p": grad(p_expr), "grad_T": grad(T_expr)}


def _manufactured(name, params, u_expr, p_expr, T_expr, u_dirichlet_sides, *, tau, dt,
                  gamma_sides) -> CaseSpec:
    d = strong_form_data(params, u_expr, p_expr, T_expr)
    u_fn = _lambdify_vec(u_expr)
    p_fn, T_fn = _lambdify(p_expr), _lambdify(T_expr)
    u_comp = [_lambdify(u_expr[0]), _lambdify(u_expr[1])]
    u_dir = {side: {c: u_comp[c] for c in comps} for side, comps in u_dirichlet_sides.items()}
    bc = BCSpec(
        u_dirichlet=u_dir,
        p_dirichlet={s: p_fn for s in Side},
        T_dirichlet={s: T_fn for s in Side},
        traction=_lambdify_boundary(d["traction"], vector=True),
        g1=_lambdify_boundary([d["g1"]], vector=False),
        phi1=_lambdify_boundary([d["phi1"]], vector=False),
    )
    gu = d["grad_u"]
    gu_fns = [[_lambdify(gu[i, j]) for j in range(2)] for i in range(2)]
    exact = ExactSolution(
        u=u_fn,
        grad_u=lambda x, y, t: tuple(tuple(f(x, y, t) for f in row) for row in gu_fns),
        p=p_fn, grad_p=_lambdify_vec(list(d["grad_p"])),
        T=T_fn, grad_T=_lambdify_vec(list(d["grad_T"])),
    )
    return CaseSpec(
        name=name, params=params,
        f=_lambdify_vec(d["f"]), g=_lambdify(d["g"]), phi=_lambdify(d["phi"]),
        bc=bc,
        u0=lambda x, y: u_fn(x, y, 0.0), p0=lambda x, y: p_fn(x, y, 0.0), T0=lambda x, y: T_fn(x, y, 0.0),
        exact=exact, tau=tau, dt=dt, gamma_sides=gamma_sides,
    )


# --- parameters ----------------------------------------------------------

def test1_params() -> PhysicalParams:
    return PhysicalParams.from_young(a0=2e5, b0=1e5, c0=2e5, alpha=0.01, beta=0.01,
                                     K=0.1, Theta=0.1, E=1.25e5, nu=0.25)


def test2_params() -> PhysicalParams:
    return PhysicalParams.from_young(a0=2e-1, b0=1e-1, c0=2e-1, alpha=0.01, beta=0.01,
                                     K=1e-5, Theta=1e-5, E=1.25e4, nu=0.25)


TEST3_VARIANTS = {
    # c0 = b0 = 0: pressure-locking regime of the P2-P1-P1 discretisation
    "pressure": dict(a0=1e-10, c0=0.0),
    # a0 = b0 = 0: temperature-locking regime
    "temperature": dict(a0=0.0, c0=1e-10),
    # both storage coefficients regularised
    "regularized": dict(a0=1e-10, c0=1e-10),
}


def test3_params(variant: str = "pressure") -> PhysicalParams:
    if variant not in TEST3_VARIANTS:
        raise ValueError(f"unknown Test 3 variant {variant!r}; choose from {sorted(TEST3_VARIANTS)}")
    return PhysicalParams.from_young(b0=0.0, alpha=1.0, beta=1.0, K=1e-7, Theta=1e-7,
                                     E=1.25e6, nu=0.25, relaxed=True, **TEST3_VARIANTS[variant])


def test4_params() -> PhysicalParams:
    return PhysicalParams.from_young(a0=2.0, b0=1.0, c0=2.0, alpha=1.0, beta=1.0,
                                     K=2.0, Theta=1e-10, E=1.25e5, nu=0.25)


# --- cases ---------------------------------------------------------------

_TEST1_SIDES = {1: Side.BOTTOM, 2: Side.RIGHT, 3: Side.TOP, 4: Side.LEFT}


def _bubble_solution():
    b = _t * _x * (1 - _x) * _y * (1 - _y)
    return [b, b], b, b


def test1(dt: float = 1e-2) -> CaseSpec:
    """Polynomial manufactured solution, linear in time."""
    u, p, T = _bubble_solution()
    return _manufactured("test1", test1_params(), u, p, T,
                         {Side.TOP: (0, 1), Side.LEFT: (0, 1)},
                         tau=1.0, dt=dt, gamma_sides=_TEST1_SIDES)


def test2(dt: float = 1e-5, tau: float = 1e-4) -> CaseSpec:
    """Trigonometric manufactured solution growing like exp(t)."""
    S = sp.sin(sp.pi * _x) * sp.cos(sp.pi * _y / 2)
    e = sp.exp(_t)
    u = [sp.pi * e * sp.cos(sp.pi * _x) * sp.cos(sp.pi * _y / 2),
         sp.pi / 2 * e * sp.sin(sp.pi * _x) * sp.sin(sp.pi * _y / 2)]
    return _manufactured("test2", test2_params(), u, e * S, e * S,
                         {Side.RIGHT: (0,), Side.LEFT: (0,), Side.BOTTOM: (1,), Side.TOP: (1,)},
                         tau=tau, dt=dt, gamma_sides=_TEST1_SIDES)


def test4(dt: float = 1e-2) -> CaseSpec:
    """Test 1's solution with convection-dominated parameters."""
    u, p, T = _bubble_solution()
    return _manufactured("test4", test4_params(), u, p, T,
                         {Side.TOP: (0, 1), Side.LEFT: (0, 1)},
                         tau=1.0, dt=dt, gamma_sides=_TEST1_SIDES)


def barry_mercer_pulse(x, y, t):
    """``sin t`` on the bottom-side window 0.2 <= x <= 0.8, zero elsewhere."""
    x = np.asarray(x, dtype=float)
    inside = (x >= 0.2) & (x <= 0.8)
    return np.where(inside, np.sin(t), 0.0) * np.ones(np.broadcast(x, y).shape)


def test3(variant: str = "pressure", dt: float = 1e-3, tau: float = 1.0) -> CaseSpec:
    """Barry-Mercer type pulse: no sources, boundary-driven pressure and temperature."""
    params = test3_params(variant)
    zero = _zero
    pd = {Side.RIGHT: zero, Side.LEFT: zero, Side.TOP: zero, Side.BOTTOM: barry_mercer_pulse}

    def traction(x, y, t, n):
        # f1 = (0, alpha p + beta T) evaluated with the boundary data; p and T
        # vanish away from the bottom window.
        val = (params.alpha + params.beta) * barry_mercer_pulse(x, y, t) * np.isclose(y, 0.0)
        return np.zeros_like(val), val

    bc = BCSpec(
        u_dirichlet={Side.BOTTOM: {0: zero}, Side.TOP: {0: zero},
                     Side.RIGHT: {1: zero}, Side.LEFT: {1: zero}},
        p_dirichlet=pd, T_dirichlet=dict(pd), traction=traction,
    )
    return CaseSpec(name="test3", params=params, bc=bc, tau=tau, dt=dt,
                    gamma_sides={1: Side.RIGHT, 2: Side.BOTTOM, 3: Side.LEFT, 4: Side.TOP},
                    relaxed=True)


CASES = {"test1": test1, "test2": test2, "test3": test3, "test4": test4}


def get_case(name: str, **kwargs) -> CaseSpec:
    try:
        factory = CASES[name]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(CASES)}") from None
    return factory(**kwargs)
