"""Time stepping for the four-field (u, xi, eta, gamma) formulation.

Each step solves the coupled elasticity / volumetric / flow / heat system
with backward differences in time.  The convective heat term
``grad T . K grad p`` is handled by Newton iteration (default), by full
lagging to the previous time level, or dropped.

Newton stops once the mass-weighted L2 increment of (xi, eta, gamma) is at
most ``newton_tol * max(1, |(xi, eta, gamma)|)``.  The relative scaling is
needed because xi carries lambda * div u and its rounding floor grows with it.

Dirichlet pressure and temperature data act on the eta and gamma rows: the
row of a constrained node is replaced by the recovery identity
``k4 xi + k5 eta + k2 gamma = p_D`` (resp. ``k1 xi + k2 eta + k3 gamma = T_D``).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly as asm
from .cases import CaseSpec
from .coeffs import DerivedCoeffs, derive_coeffs, from_multiphysics, to_multiphysics
from .mesh import Mesh, Side

log = logging.getLogger(__name__)

CONVECTIVE_MODES = ("newton", "lagged", "none")

# dt <= STABILITY_CONSTANT * h**2 is assumed safe for the theta = 0 splitting.
STABILITY_CONSTANT = 1.0


class SolverError(RuntimeError):
    """Base class for failures inside a time step."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class NewtonDivergence(SolverError):
    pass


class LinearSolveError(SolverError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    theta: int = 1
    dt: float = 1e-2
    t_final: float = 1.0
    convective_mode: str = "newton"
    newton_tol: float = 1e-10
    newton_max_iter: int = 20
    cutoff: float | None = None
    linear_tol: float = 1e-12
    qorder: int = 4
    keep_all: bool = True

    def __post_init__(self):
        if self.theta not in (0, 1):
            raise ValueError(f"theta must be 0 or 1, got {self.theta}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.convective_mode not in CONVECTIVE_MODES:
            raise ValueError(f"convective_mode must be one of {CONVECTIVE_MODES}")

    def n_steps(self) -> int:
        m = round(self.t_final / self.dt)
        if m < 0 or abs(m * self.dt - self.t_final) > 1e-9 * max(1.0, abs(self.t_final)):
            raise ValueError(f"t_final={self.t_final} is not an integer multiple of dt={self.dt}")
        return m


@dataclass
class StepDiagnostics:
    t: float
    newton_iterations: int
    final_increment: float
    linear_residual: float
    increments: list[float] = field(default_factory=list)


@dataclass
class State:
    t: float
    u: np.ndarray
    xi: np.ndarray | None
    eta: np.ndarray | None
    gamma: np.ndarray | None
    p: np.ndarray
    T: np.ndarray
    q: np.ndarray
    diagnostics: StepDiagnostics | None = None


@dataclass
class Trajectory:
    states: list[State]
    diagnostics: list[StepDiagnostics]

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    @property
    def final(self) -> State:
        return self.states[-1]


def _equilibrate(A: sp.csr_matrix):
    """Row then column max-norm scalings ``r, c`` so that ``diag(r) A diag(c)`` has unit maxima."""
    r = abs(A).max(axis=1).toarray().ravel()
    if np.any(r == 0):
        raise LinearSolveError("matrix has an empty row")
    r = 1.0 / r
    c = abs(sp.diags(r) @ A).max(axis=0).toarray().ravel()
    if np.any(c == 0):
        raise LinearSolveError("matrix has an empty column")
    return r, 1.0 / c


def solve_linear(A: sp.spmatrix, b: np.ndarray, tol: float = 1e-12, refine: int = 3):
    """Sparse LU solve with equilibration and iterative refinement.

    Returns ``(x, relative_residual)``.  Equilibration matters here: the
    elasticity block scales with the Lame constants while the volumetric
    block can be O(1e-5), and unscaled pivoting leaves visible noise in xi.
    """
    A = sp.csr_matrix(A)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b, dtype=float), 0.0
    r, c = _equilibrate(A)
    try:
        lu = spla.splu(sp.csc_matrix(sp.diags(r) @ A @ sp.diags(c)))
    except RuntimeError as exc:
        raise LinearSolveError(f"factorization failed: {exc}") from exc
    x = c * lu.solve(r * b)
    res = np.linalg.norm(b - A @ x) / bnorm
    for _ in range(refine):
        if res < tol:
            break
        x = x + c * lu.solve(r * (b - A @ x))
        res = np.linalg.norm(b - A @ x) / bnorm
    if not np.isfinite(res) or res >= tol:
        raise LinearSolveError(f"linear residual {res:.3e} above tolerance {tol:.1e}", residual=res)
    return x, res


def _replace_rows(A: sp.csr_matrix, rows: np.ndarray, R: sp.csr_matrix) -> sp.csr_matrix:
    """``A`` with the listed rows substituted by the same rows of ``R``."""
    keep = np.ones(A.shape[0])
    keep[rows] = 0.0
    return (sp.diags(keep) @ A + R).tocsr()


class _DirichletSet:
    """Constrained nodes for one scalar field and how to evaluate their data."""

    def __init__(self, side_map, nodes_of, coords):
        self.sides = dict(side_map)
        self.nodes_of = nodes_of
        self.coords = coords
        ids = set()
        for side in self.sides:
            ids.update(int(i) for i in nodes_of(side))
        self.ids = np.array(sorted(ids), dtype=np.int64)

    def values(self, t: float) -> np.ndarray:
        out = np.full(len(self.ids), np.nan)
        pos = {int(i): k for k, i in enumerate(self.ids)}
        for side in sorted(self.sides, reverse=True):
            nodes = self.nodes_of(side)
            xy = self.coords[nodes]
            vals = np.broadcast_to(self.sides[side](xy[:, 0], xy[:, 1], t), (len(nodes),))
            for node, v in zip(nodes, vals):
                k = pos[int(node)]
                if not np.isnan(out[k]) and not np.isclose(out[k], v, rtol=1e-10, atol=1e-12):
                    raise ValueError(f"conflicting Dirichlet data at node {node}: {out[k]} vs {v}")
                out[k] = v  # lower Side processed last, so it wins at corners
        return out


class _Operators:
    """Time-independent matrices shared by the MFEM and baseline solvers."""

    def __init__(self, case: CaseSpec, mesh: Mesh, qorder: int = 4):
        self.case = case
        self.ctx = asm.FEContext.from_mesh(mesh, qorder)
        ctx, prm = self.ctx, case.params
        self.A = asm.elasticity_p2(ctx, prm.mu)
        self.B = asm.div_coupling(ctx)
        self.M = asm.mass_p1(ctx)
        self.SK = asm.stiffness_p1(ctx, prm.K)
        self.ST = asm.stiffness_p1(ctx, prm.Theta)
        self._M_lu = None
        self._loads = None
        d = ctx.dofs
        self.n1, self.n2 = d.n_p1, d.n_p2
        bc = case.bc
        self.u_dir = []
        for comp in (0, 1):
            smap = {s: fns[comp] for s, fns in bc.u_dirichlet.items() if comp in fns}
            self.u_dir.append(_DirichletSet(smap, d.side_p2_nodes, d.p2_coords))
        self.p_dir = _DirichletSet(bc.p_dirichlet, d.side_p1_nodes, ctx.mesh.vertices)
        self.T_dir = _DirichletSet(bc.T_dirichlet, d.side_p1_nodes, ctx.mesh.vertices)

    def project_p1(self, rhs: np.ndarray) -> np.ndarray:
        if self._M_lu is None:
            self._M_lu = spla.splu(self.M.tocsc())
        return self._M_lu.solve(rhs)

    def mass_norm(self, *fields) -> float:
        return float(np.sqrt(sum(f @ (self.M @ f) for f in fields)))

    # loads -----------------------------------------------------------------
    def loads(self, t: float):
        """``(displacement, flow, heat)`` load vectors at time ``t``; the last one is cached."""
        if self._loads is None or self._loads[0] != t:
            self._loads = (t, self.displacement_load(t), self.flow_load(t), self.heat_load(t))
        return self._loads[1:]

    def displacement_load(self, t: float) -> np.ndarray:
        case, ctx = self.case, self.ctx
        F = asm.volume_load(ctx, case.f, t, "p2vec")
        tr = case.bc.traction
        if tr is not None:
            for comp in (0, 1):
                sides = case.bc.u_natural_sides(comp)
                if sides:
                    part = asm.boundary_load(ctx, lambda x, y, tt, n, c=comp: tr(x, y, tt, n)[c],
                                             sides, t, "p2")
                    F[comp * self.n2:(comp + 1) * self.n2] += part
        return F

    def flow_load(self, t: float) -> np.ndarray:
        case = self.case
        G = asm.volume_load(self.ctx, case.g, t, "p1")
        if case.bc.g1 is not None and case.bc.p_natural_sides():
            G += asm.boundary_load(self.ctx, case.bc.g1, case.bc.p_natural_sides(), t, "p1")
        return G

    def heat_load(self, t: float) -> np.ndarray:
        case = self.case
        P = asm.volume_load(self.ctx, case.phi, t, "p1")
        if case.bc.phi1 is not None and case.bc.T_natural_sides():
            P += asm.boundary_load(self.ctx, case.bc.phi1, case.bc.T_natural_sides(), t, "p1")
        return P

    # constraints -----------------------------------------------------------
    def u_constraint_rows(self, t: float, ncols: int):
        rows, vals = [], []
        for comp, dset in enumerate(self.u_dir):
            if len(dset.ids):
                rows.append(dset.ids + comp * self.n2)
                vals.append(dset.values(t))
        if not rows:
            return np.zeros(0, dtype=np.int64), sp.csr_matrix((ncols, ncols)), np.zeros(0)
        rows = np.concatenate(rows)
        vals = np.concatenate(vals)
        R = sp.csr_matrix((np.ones(len(rows)), (rows, rows)), shape=(ncols, ncols))
        return rows, R, vals


def _convection(ops: _Operators, T_frozen, p_frozen, cutoff):
    return asm.convection_forms(ops.ctx, T_frozen, p_frozen, ops.case.params.K, cutoff)


class MFEMSolver:
    """Four-field Taylor-Hood time stepper."""

    def __init__(self, case: CaseSpec, mesh: Mesh, cfg: SchemeConfig):
        self.case, self.mesh, self.cfg = case, mesh, cfg
        self.k: DerivedCoeffs = derive_coeffs(case.params, relaxed=case.relaxed or case.params.relaxed)
        self.ops = _Operators(case, mesh, cfg.qorder)
        if cfg.theta == 0 and cfg.dt > STABILITY_CONSTANT * mesh.h**2:
            warnings.warn(f"theta=0 with dt={cfg.dt:g} > {STABILITY_CONSTANT:g}*h^2={mesh.h**2:g}; "
                          "the decoupled scheme is only conditionally stable", RuntimeWarning, stacklevel=2)

    # -- helpers -------------------------------------------------------------
    def recover(self, xi, eta, gamma):
        return from_multiphysics(self.k, xi, eta, gamma)

    def init_state(self) -> State:
        case, ops = self.case, self.ops
        u = asm.interpolate(case.u0, ops.ctx, "p2vec")
        p = asm.interpolate(case.p0, ops.ctx, "p1")
        T = asm.interpolate(case.T0, ops.ctx, "p1")
        q = ops.project_p1(ops.B @ u)
        xi, eta, gamma = to_multiphysics(case.params, T, p, q)
        T_r, p_r, q_r = self.recover(xi, eta, gamma)
        return State(t=0.0, u=u, xi=xi, eta=eta, gamma=gamma, p=p_r, T=T_r, q=q_r)

    def _pT_constraint_rows(self, t, offsets, ncols, xi_known=None):
        """Rows replacing eta/gamma equations at Dirichlet nodes.

        With ``xi_known`` (theta = 0 second stage) the xi contribution moves to
        the right-hand side and columns refer to the (eta, gamma) system.
        """
        k = self.k
        rows, R_r, R_c, R_v, rhs = [], [], [], [], []
        specs = ((self.ops.p_dir, offsets["eta"], (k.k4, k.k5, k.k2)),
                 (self.ops.T_dir, offsets["gamma"], (k.k1, k.k2, k.k3)))
        for dset, row_off, (cx, ce, cg) in specs:
            if not len(dset.ids):
                continue
            ids = dset.ids
            vals = dset.values(t)
            scale = max(abs(cx), abs(ce), abs(cg)) if xi_known is None else max(abs(ce), abs(cg))
            r = ids + row_off
            rows.append(r)
            entries = [(offsets["eta"], ce), (offsets["gamma"], cg)]
            if xi_known is None:
                entries.append((offsets["xi"], cx))
            else:
                vals = vals - cx * xi_known[ids]
            for col_off, coef in entries:
                if coef != 0.0:
                    R_r.append(r)
                    R_c.append(ids + col_off)
                    R_v.append(np.full(len(ids), coef / scale))
            rhs.append(vals / scale)
        if not rows:
            return np.zeros(0, dtype=np.int64), sp.csr_matrix((ncols, ncols)), np.zeros(0)
        R = sp.csr_matrix((np.concatenate(R_v), (np.concatenate(R_r), np.concatenate(R_c))),
                          shape=(ncols, ncols))
        return np.concatenate(rows), R, np.concatenate(rhs)

    def _heat_blocks(self, T_frozen, p_frozen):
        """Jacobian pieces of ``-(grad T . K grad p, z)`` in (T, p) and the frozen residual.

        Returns ``(CT, Cp, b)`` so the heat row carries ``-(CT T + Cp p) + b``.
        """
        mode = self.cfg.convective_mode
        n1 = self.ops.n1
        if mode == "none":
            Z = sp.csr_matrix((n1, n1))
            return Z, Z, np.zeros(n1)
        C_T, C_p, b_c = _convection(self.ops, T_frozen, p_frozen, self.cfg.cutoff)
        if mode == "lagged":
            Z = sp.csr_matrix((n1, n1))
            return Z, Z, -b_c
        return C_T, C_p, b_c

    # -- theta = 1 -----------------------------------------------------------
    def _monolithic(self, state: State, t1: float, frozen):
        ops, k, dt = self.ops, self.k, self.cfg.dt
        A, B, M, SK, ST = ops.A, ops.B, ops.M, ops.SK, ops.ST
        CT, Cp, bconv = self._heat_blocks(*frozen)
        L = ST - CT  # acts on T
        blocks = [
            [A, -B.T, None, None],
            [B, k.k6 * M, -k.k4 * M, -k.k1 * M],
            [None, dt * k.k4 * SK, M + dt * k.k5 * SK, dt * k.k2 * SK],
            [None, dt * (k.k1 * L - k.k4 * Cp), dt * (k.k2 * L - k.k5 * Cp), M + dt * (k.k3 * L - k.k2 * Cp)],
        ]
        K = sp.bmat(blocks, format="csr")
        F, G, P = ops.loads(t1)
        rhs = np.concatenate([
            F,
            np.zeros(ops.n1),
            M @ state.eta + dt * G,
            M @ state.gamma + dt * (P - bconv),
        ])
        return self.apply_bcs(K, rhs, t1)

    def apply_bcs(self, K: sp.spmatrix, rhs: np.ndarray, t: float):
        """Impose Dirichlet data on the monolithic (u, xi, eta, gamma) system.

        Displacement rows become identity rows.  At a pressure (temperature)
        Dirichlet vertex the eta (gamma) row becomes the recovery identity,
        scaled so its largest coefficient is 1.
        """
        n = K.shape[0]
        rows_u, R_u, v_u = self.ops.u_constraint_rows(t, n)
        rows_pt, R_pt, v_pt = self._pT_constraint_rows(t, self.ops.ctx.dofs.offsets, n)
        K = _replace_rows(sp.csr_matrix(K), np.concatenate([rows_u, rows_pt]), R_u + R_pt)
        rhs = np.array(rhs, dtype=float)
        rhs[rows_u] = v_u
        rhs[rows_pt] = v_pt
        return K, rhs

    def _step_theta1(self, state: State, t1: float) -> State:
        ops, cfg = self.ops, self.cfg
        d = ops.ctx.dofs
        iterate = (state.xi, state.eta, state.gamma)
        T_f, p_f, _ = self.recover(*iterate)
        if cfg.convective_mode == "lagged":
            frozen = (state.T, state.p)
        else:
            frozen = (T_f, p_f)
        increments: list[float] = []
        max_iter = cfg.newton_max_iter if cfg.convective_mode == "newton" else 1
        res = 0.0
        for it in range(1, max_iter + 1):
            K, rhs = self._monolithic(state, t1, frozen)
            X, res = solve_linear(K, rhs, cfg.linear_tol)
            new = (X[d.block("xi")], X[d.block("eta")], X[d.block("gamma")])
            u = np.concatenate([X[d.block("ux")], X[d.block("uy")]])
            inc = ops.mass_norm(*(a - b for a, b in zip(new, iterate)))
            increments.append(inc)
            iterate = new
            if cfg.convective_mode != "newton":
                break
            if inc <= cfg.newton_tol * max(1.0, ops.mass_norm(*new)):
                break
            T_f, p_f, _ = self.recover(*iterate)
            frozen = (T_f, p_f)
        else:
            raise NewtonDivergence(f"Newton did not converge in {max_iter} iterations at t={t1:g}",
                                   iterations=max_iter, last_increment=increments[-1],
                                   increments=increments)
        xi, eta, gamma = iterate
        T, p, q = self.recover(xi, eta, gamma)
        diag = StepDiagnostics(t=t1, newton_iterations=len(increments), final_increment=increments[-1],
                               linear_residual=res, increments=increments)
        return State(t=t1, u=u, xi=xi, eta=eta, gamma=gamma, p=p, T=T, q=q, diagnostics=diag)

    # -- theta = 0 -----------------------------------------------------------
    def _step_theta0(self, state: State, t1: float) -> State:
        ops, k, cfg, dt = self.ops, self.k, self.cfg, self.cfg.dt
        A, B, M, SK, ST = ops.A, ops.B, ops.M, ops.SK, ops.ST
        n2x2, n1 = 2 * ops.n2, ops.n1
        # stage 1: displacement and xi with lagged eta, gamma
        K1 = sp.bmat([[A, -B.T], [B, k.k6 * M]], format="csr")
        F, G, P = ops.loads(t1)
        rhs1 = np.concatenate([F, M @ (k.k4 * state.eta + k.k1 * state.gamma)])
        rows_u, R_u, v_u = ops.u_constraint_rows(t1, K1.shape[0])
        K1 = _replace_rows(K1, rows_u, R_u)
        rhs1[rows_u] = v_u
        X1, res1 = solve_linear(K1, rhs1, cfg.linear_tol)
        u, xi = X1[:n2x2], X1[n2x2:]
        # stage 2: eta, gamma with xi known
        off = {"xi": -1, "eta": 0, "gamma": n1}
        iterate = (state.eta, state.gamma)
        if cfg.convective_mode == "lagged":
            frozen = (state.T, state.p)
        else:
            T_f, p_f, _ = self.recover(xi, *iterate)
            frozen = (T_f, p_f)
        increments: list[float] = []
        max_iter = cfg.newton_max_iter if cfg.convective_mode == "newton" else 1
        res2 = 0.0
        for it in range(1, max_iter + 1):
            CT, Cp, bconv = self._heat_blocks(*frozen)
            L = ST - CT
            K2 = sp.bmat([
                [M + dt * k.k5 * SK, dt * k.k2 * SK],
                [dt * (k.k2 * L - k.k5 * Cp), M + dt * (k.k3 * L - k.k2 * Cp)],
            ], format="csr")
            rhs2 = np.concatenate([
                M @ state.eta + dt * (G - k.k4 * (SK @ xi)),
                M @ state.gamma + dt * (P - bconv - (k.k1 * (L @ xi) - k.k4 * (Cp @ xi))),
            ])
            rows, R, vals = self._pT_constraint_rows(t1, off, K2.shape[0], xi_known=xi)
            K2 = _replace_rows(K2, rows, R)
            rhs2[rows] = vals
            X2, res2 = solve_linear(K2, rhs2, cfg.linear_tol)
            new = (X2[:n1], X2[n1:])
            inc = ops.mass_norm(*(a - b for a, b in zip(new, iterate)))
            increments.append(inc)
            iterate = new
            if cfg.convective_mode != "newton":
                break
            if inc <= cfg.newton_tol * max(1.0, ops.mass_norm(xi, *new)):
                break
            T_f, p_f, _ = self.recover(xi, *iterate)
            frozen = (T_f, p_f)
        else:
            raise NewtonDivergence(f"Newton did not converge in {max_iter} iterations at t={t1:g}",
                                   iterations=max_iter, last_increment=increments[-1],
                                   increments=increments)
        eta, gamma = iterate
        # p, T use the lagged eta, gamma; q uses the new ones
        T, p, _ = self.recover(xi, state.eta, state.gamma)
        _, _, q = self.recover(xi, eta, gamma)
        diag = StepDiagnostics(t=t1, newton_iterations=len(increments), final_increment=increments[-1],
                               linear_residual=max(res1, res2), increments=increments)
        return State(t=t1, u=u, xi=xi, eta=eta, gamma=gamma, p=p, T=T, q=q, diagnostics=diag)

    def step(self, state: State, t1: float | None = None) -> State:
        t1 = state.t + self.cfg.dt if t1 is None else t1
        if self.cfg.theta == 1:
            return self._step_theta1(state, t1)
        return self._step_theta0(state, t1)

    def run(self, on_step: Callable[[State], None] | None = None) -> Trajectory:
        m = self.cfg.n_steps()
        state = self.init_state()
        states, diags = [state], []
        for n in range(1, m + 1):
            state = self.step(state, n * self.cfg.dt)
            diags.append(state.diagnostics)
            if on_step is not None:
                on_step(state)
            if self.cfg.keep_all or n == m:
                states.append(state)
        return Trajectory(states=states, diagnostics=diags)


def init_state(case: CaseSpec, mesh: Mesh, cfg: SchemeConfig | None = None) -> State:
    return MFEMSolver(case, mesh, cfg or SchemeConfig(t_final=0.0)).init_state()


def step(state: State, case: CaseSpec, mesh: Mesh, cfg: SchemeConfig) -> State:
    return MFEMSolver(case, mesh, cfg).step(state)


def run(case: CaseSpec, mesh: Mesh, cfg: SchemeConfig, on_step=None) -> Trajectory:
    return MFEMSolver(case, mesh, cfg).run(on_step)


class ThreeFieldSolver:
    """Standard P2-P1-P1 discretisation in (u, p, T) with lagged convection.

    Serves as the comparison method for the locking study.
    """

    def __init__(self, case: CaseSpec, mesh: Mesh, cfg: SchemeConfig):
        self.case, self.mesh, self.cfg = case, mesh, cfg
        case.params.validate(relaxed=case.relaxed or case.params.relaxed)
        self.ops = _Operators(case, mesh, cfg.qorder)
        self.D = asm.divdiv_p2(self.ops.ctx)

    def init_state(self) -> State:
        case, ops = self.case, self.ops
        u = asm.interpolate(case.u0, ops.ctx, "p2vec")
        p = asm.interpolate(case.p0, ops.ctx, "p1")
        T = asm.interpolate(case.T0, ops.ctx, "p1")
        return State(t=0.0, u=u, xi=None, eta=None, gamma=None, p=p, T=T, q=ops.project_p1(ops.B @ u))

    def step(self, state: State, t1: float | None = None) -> State:
        t1 = state.t + self.cfg.dt if t1 is None else t1
        ops, prm, dt = self.ops, self.case.params, self.cfg.dt
        A, B, M, SK, ST = ops.A, ops.B, ops.M, ops.SK, ops.ST
        al, be, a0, b0, c0 = prm.alpha, prm.beta, prm.a0, prm.b0, prm.c0
        K = sp.bmat([
            [A + prm.lam * self.D, -al * B.T, -be * B.T],
            [al * B, c0 * M + dt * SK, -b0 * M],
            [be * B, -b0 * M, a0 * M + dt * ST],
        ], format="csr")
        if self.cfg.convective_mode == "none":
            conv = np.zeros(ops.n1)
        else:
            _, _, conv = _convection(ops, state.T, state.p, self.cfg.cutoff)
        Bu = B @ state.u
        F, G, P = ops.loads(t1)
        rhs = np.concatenate([
            F,
            al * Bu + M @ (c0 * state.p - b0 * state.T) + dt * G,
            be * Bu + M @ (a0 * state.T - b0 * state.p) + dt * (P + conv),
        ])
        n = K.shape[0]
        n2x2, n1 = 2 * ops.n2, ops.n1
        rows_u, R_u, v_u = ops.u_constraint_rows(t1, n)
        rows, vals = [rows_u], [v_u]
        R = R_u
        for dset, off in ((ops.p_dir, n2x2), (ops.T_dir, n2x2 + n1)):
            if len(dset.ids):
                r = dset.ids + off
                rows.append(r)
                vals.append(dset.values(t1))
                R = R + sp.csr_matrix((np.ones(len(r)), (r, r)), shape=(n, n))
        rows = np.concatenate(rows)
        K = _replace_rows(K, rows, R)
        rhs[rows] = np.concatenate(vals)
        X, res = solve_linear(K, rhs, self.cfg.linear_tol)
        u, p, T = X[:n2x2], X[n2x2:n2x2 + n1], X[n2x2 + n1:]
        diag = StepDiagnostics(t=t1, newton_iterations=1, final_increment=0.0, linear_residual=res)
        return State(t=t1, u=u, xi=None, eta=None, gamma=None, p=p, T=T,
                     q=ops.project_p1(B @ u), diagnostics=diag)

    def run(self, on_step=None) -> Trajectory:
        m = self.cfg.n_steps()
        state = self.init_state()
        states, diags = [state], []
        for n in range(1, m + 1):
            state = self.step(state, n * self.cfg.dt)
            diags.append(state.diagnostics)
            if on_step is not None:
                on_step(state)
            if self.cfg.keep_all or n == m:
                states.append(state)
        return Trajectory(states=states, diagnostics=diags)


def solve_threefield_baseline(case: CaseSpec, mesh: Mesh, cfg: SchemeConfig) -> Trajectory:
    if cfg.convective_mode == "newton":
        cfg = replace(cfg, convective_mode="lagged")
    return ThreeFieldSolver(case, mesh, cfg).run()
