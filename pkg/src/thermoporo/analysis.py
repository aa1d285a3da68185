"""Error norms, convergence ladders and scalar diagnostics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import assembly as asm
from .cases import CaseSpec
from .mesh import build_unit_square
from .solver import MFEMSolver, SchemeConfig, SolverError, State, ThreeFieldSolver, Trajectory

ERROR_ORDER = 6
FIELDS = ("u", "p", "T")
NORMS = ("l2", "h1")
CSV_HEADER = ("h,eu_l2,cr_u_l2,eu_h1,cr_u_h1,ep_l2,cr_p_l2,ep_h1,cr_p_h1,"
              "eT_l2,cr_T_l2,eT_h1,cr_T_h1")


def _rel(abs_err: float, ref: float) -> float:
    if ref == 0.0:
        return 0.0 if abs_err == 0.0 else math.inf
    return abs_err / ref


def field_error(values: np.ndarray, ctx, exact: Callable, grad: Callable | None = None,
                norm: str = "l2", space: str = "p1", t: float = 0.0) -> tuple[float, float]:
    """Absolute and relative error of a finite element field against a closed form.

    ``exact(x, y, t)`` returns the scalar (``space="p1"``/``"p2"``) or the
    pair ``(vx, vy)`` (``space="p2vec"``).  ``grad`` is required for
    ``norm="h1"``, which is the full norm: L2 part plus gradient part.
    """
    ctx = asm.as_context(ctx).with_order(ERROR_ORDER)
    norm = norm.lower()
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}")
    if norm == "h1" and grad is None:
        raise ValueError("H1 error needs the exact gradient")
    x, y = ctx.xq[..., 0], ctx.xq[..., 1]
    w = ctx.wdet
    values = np.asarray(values, dtype=float)

    if space == "p1":
        comps = [values[ctx.dofs.cell_p1]]
        basis, grads = ctx.phi1, np.broadcast_to(ctx.grad1[:, None], (len(w), w.shape[1], 3, 2))
        ex_vals = [np.broadcast_to(exact(x, y, t), w.shape)]
        ex_grads = [grad(x, y, t)] if grad is not None else None
    elif space in ("p2", "p2vec"):
        n2 = ctx.dofs.n_p2
        cells = ctx.dofs.cell_p2
        basis, grads = ctx.phi2, ctx.grad2
        if space == "p2":
            comps = [values[cells]]
            ex_vals = [np.broadcast_to(exact(x, y, t), w.shape)]
            ex_grads = [grad(x, y, t)] if grad is not None else None
        else:
            comps = [values[:n2][cells], values[n2:][cells]]
            ex_vals = [np.broadcast_to(v, w.shape) for v in exact(x, y, t)]
            ex_grads = list(grad(x, y, t)) if grad is not None else None
    else:
        raise ValueError(f"unknown space {space!r}")

    err2 = ref2 = 0.0
    for k, loc in enumerate(comps):
        vh = np.einsum("qa,ea->eq", basis, loc)
        err2 += np.sum(w * (vh - ex_vals[k]) ** 2)
        ref2 += np.sum(w * ex_vals[k] ** 2)
        if norm == "h1":
            gh = np.einsum("eqad,ea->eqd", grads, loc)
            gx, gy = (np.broadcast_to(g, w.shape) for g in ex_grads[k])
            err2 += np.sum(w * ((gh[..., 0] - gx) ** 2 + (gh[..., 1] - gy) ** 2))
            ref2 += np.sum(w * (gx ** 2 + gy ** 2))
    abs_err = math.sqrt(max(err2, 0.0))
    return abs_err, _rel(abs_err, math.sqrt(ref2))


def state_errors(state: State, ctx, case: CaseSpec) -> dict[tuple[str, str], float]:
    """Relative L2/H1 errors of ``u``, ``p``, ``T`` keyed by ``(field, norm)``."""
    ex = case.exact
    if ex is None:
        raise ValueError(f"case {case.name!r} has no exact solution")
    spec = {"u": (state.u, ex.u, ex.grad_u, "p2vec"),
            "p": (state.p, ex.p, ex.grad_p, "p1"),
            "T": (state.T, ex.T, ex.grad_T, "p1")}
    out = {}
    for name, (vals, fn, gfn, space) in spec.items():
        for norm in NORMS:
            out[(name, norm)] = field_error(vals, ctx, fn, gfn, norm, space, state.t)[1]
    return out


def convergence_rates(errors: Sequence[float]) -> list[float]:
    """``log2(e_{2h}/e_h)`` between consecutive entries of an h-halving sequence."""
    rates = []
    for coarse, fine in zip(errors[:-1], errors[1:]):
        if coarse > 0 and fine > 0 and np.isfinite(coarse) and np.isfinite(fine):
            rates.append(math.log2(coarse / fine))
        else:
            rates.append(math.nan)
    return rates


@dataclass
class ErrorReport:
    h: list[float] = field(default_factory=list)
    errors: dict[tuple[str, str], list[float]] = field(default_factory=dict)

    def add(self, h: float, errs: dict[tuple[str, str], float]) -> None:
        self.h.append(h)
        for key in ((f, n) for f in FIELDS for n in NORMS):
            self.errors.setdefault(key, []).append(errs.get(key, math.nan))

    def error(self, fld: str, norm: str) -> list[float]:
        return self.errors[(fld, norm.lower())]

    def rates(self, fld: str, norm: str) -> list[float]:
        return convergence_rates(self.error(fld, norm))

    def rows(self) -> list[list[str]]:
        rows = []
        for i, h in enumerate(self.h):
            row = [_fmt(h)]
            for fld in FIELDS:
                for norm in NORMS:
                    row.append(_fmt(self.error(fld, norm)[i]))
                    row.append("" if i == 0 else _fmt(self.rates(fld, norm)[i - 1]))
            rows.append(row)
        return rows

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        csv.writer(buf, lineterminator="\n").writerows(self.rows())
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def format_table(self) -> str:
        head = ["h"] + [f"{f}-{n.upper()}" + s for f in FIELDS for n in NORMS for s in ("", " CR")]
        lines = [" | ".join(f"{c:>10}" for c in head)]
        for i, h in enumerate(self.h):
            cells = [f"1/{round(1 / h)}"]
            for fld in FIELDS:
                for norm in NORMS:
                    cells.append(f"{self.error(fld, norm)[i]:.4e}")
                    cells.append("-" if i == 0 else f"{self.rates(fld, norm)[i - 1]:.4f}")
            lines.append(" | ".join(f"{c:>10}" for c in cells))
        return "\n".join(lines)


def _fmt(v: float) -> str:
    return repr(float(v))


def _make_solver(case, mesh, cfg, baseline):
    return (ThreeFieldSolver if baseline else MFEMSolver)(case, mesh, cfg)


def default_config(case: CaseSpec, **overrides) -> SchemeConfig:
    base = dict(dt=case.dt, t_final=case.tau, keep_all=False)
    base.update(overrides)
    return SchemeConfig(**base)


def run_final(case: CaseSpec, n: int, cfg: SchemeConfig, baseline: bool = False) -> tuple[State, object]:
    """Final state of one run and the solver's context."""
    mesh = build_unit_square(n)
    cfg = replace(cfg, keep_all=False)
    solver = _make_solver(case, mesh, cfg, baseline)
    return solver.run().final, solver.ops.ctx


def spatial_ladder(case: CaseSpec, n_list: Sequence[int], cfg: SchemeConfig | None = None,
                   baseline: bool = False, on_level: Callable | None = None,
                   record_failures: bool = False) -> ErrorReport:
    """Errors at the final time for each mesh in ``n_list``; rates via :meth:`ErrorReport.rates`.

    With ``record_failures`` a level whose run raises :class:`SolverError` is
    stored as ``inf`` instead of aborting the ladder.  Non-finite fields give
    non-finite errors either way.
    """
    cfg = cfg or default_config(case)
    report = ErrorReport()
    for n in n_list:
        try:
            state, ctx = run_final(case, n, cfg, baseline)
        except SolverError:
            if not record_failures:
                raise
            report.add(1.0 / n, {key: math.inf for key in ((f, m) for f in FIELDS for m in NORMS)})
            continue
        with np.errstate(all="ignore"):
            errs = state_errors(state, ctx, case)
        report.add(1.0 / n, errs)
        if on_level is not None:
            on_level(n, state, errs)
    return report


def successive_ratios(diffs: Sequence[float]) -> list[float]:
    """``d[i] / d[i+1]``; NaN where the finer difference vanishes."""
    return [a / b if b > 0 else math.nan for a, b in zip(diffs[:-1], diffs[1:])]


@dataclass
class TimeLadder:
    dt: list[float]
    diffs: dict[str, list[float]]
    ratios: dict[str, list[float]]
    noise_level: bool

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dt", "du_l2", "rho_u", "dp_l2", "rho_p", "dT_l2", "rho_T"])
        for i, dt in enumerate(self.dt):
            row = [_fmt(dt)]
            for f in FIELDS:
                row.append(_fmt(self.diffs[f][i]))
                row.append("" if i == 0 else _fmt(self.ratios[f][i - 1]))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def time_ladder(case_factory: Callable[[float], CaseSpec], n: int, dt_list: Sequence[float],
                cfg: SchemeConfig | None = None, noise_tol: float = 1e-9) -> TimeLadder:
    """Discrete L2 differences between final states at ``dt`` and ``dt/2``.

    ``case_factory(dt)`` builds the case; the extra run at ``dt_list[-1]/2``
    is added automatically.  ``noise_level`` is set when every difference is
    below ``noise_tol`` relative to the solution size, in which case the
    ratios carry no information.
    """
    dts = list(dt_list) + [dt_list[-1] / 2]
    finals = []
    ctx = None
    for dt in dts:
        case = case_factory(dt)
        c = replace(cfg, dt=dt) if cfg is not None else default_config(case)
        state, ctx = run_final(case, n, c)
        finals.append(state)
    M1 = asm.mass_p1(ctx)
    M2 = asm.mass_p2(ctx)
    n2 = ctx.dofs.n_p2

    def norm(f, v):
        if f == "u":
            return math.sqrt(v[:n2] @ (M2 @ v[:n2]) + v[n2:] @ (M2 @ v[n2:]))
        return math.sqrt(v @ (M1 @ v))

    diffs = {f: [norm(f, getattr(a, f) - getattr(b, f)) for a, b in zip(finals[:-1], finals[1:])]
             for f in FIELDS}
    ratios = {f: successive_ratios(d) for f, d in diffs.items()}
    size = max(max(norm(f, getattr(finals[-1], f)) for f in FIELDS), 1e-300)
    noise = all(d <= noise_tol * size for ds in diffs.values() for d in ds)
    return TimeLadder(dt=list(dt_list), diffs=diffs, ratios=ratios, noise_level=noise)


def oscillation_indicator(values) -> float:
    """Relative depth of negative undershoot: ``max(0, -min) / max|v|``; 0 for a zero field."""
    v = np.asarray(values, dtype=float)
    peak = np.max(np.abs(v)) if v.size else 0.0
    if peak == 0.0:
        return 0.0
    return float(max(0.0, -np.min(v)) / peak)


def energy_series(trajectory: Trajectory | Sequence[State], solver: MFEMSolver,
                  lower_bound: bool = False) -> list[float]:
    """Discrete energy of each state.

    The default is the quadratic form the backward-Euler scheme dissipates,
    ``1/2 (u.Au + k6|xi|^2 + k5|eta|^2 + 2 k2 (eta, gamma) + k3|gamma|^2)``.
    With ``lower_bound=True`` the cross term is split by Young's inequality,
    giving ``1/2 (u.Au + k6|xi|^2 + (k5-k2)|eta|^2 + (k3-k2)|gamma|^2)``.
    """
    states = trajectory.states if isinstance(trajectory, Trajectory) else list(trajectory)
    A, M, k = solver.ops.A, solver.ops.M, solver.k
    out = []
    for s in states:
        ee = float(s.u @ (A @ s.u))
        xi, eta, gam = s.xi, s.eta, s.gamma
        mxi, meta, mgam = xi @ (M @ xi), eta @ (M @ eta), gam @ (M @ gam)
        if lower_bound:
            val = ee + k.k6 * mxi + (k.k5 - k.k2) * meta + (k.k3 - k.k2) * mgam
        else:
            val = ee + k.k6 * mxi + k.k5 * meta + 2 * k.k2 * (eta @ (M @ gam)) + k.k3 * mgam
        out.append(0.5 * float(val))
    return out
