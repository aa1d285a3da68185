"""Command-line front end: single runs, spatial ladders and time ladders."""
from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, cases
from .coeffs import ParameterError
from .mesh import build_unit_square
from .solver import MFEMSolver, SchemeConfig, SolverError, State, ThreeFieldSolver

EMIT_CHOICES = ("errors", "fields", "energy", "diagnostics")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ladder(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}") from None
    if a <= 0 or b < a:
        raise argparse.ArgumentTypeError(f"need 0 < a <= b, got {text!r}")
    return a, b


def _dt_ladder(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}") from None
    if not (0 < b <= a):
        raise argparse.ArgumentTypeError(f"need 0 < smallest <= largest dt, got {text!r}")
    return a, b


def halving(a: float, b: float, integer: bool) -> list:
    """``a, a*2, ...`` up to ``b`` for mesh counts; ``a, a/2, ...`` down to ``b`` for steps."""
    out = [a]
    if integer:
        while out[-1] * 2 <= b:
            out.append(out[-1] * 2)
    else:
        while out[-1] / 2 >= b * (1 - 1e-12):
            out.append(out[-1] / 2)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="thermoporo", description="Four-field mixed FEM for nonlinear thermo-poroelasticity.")
    p.add_argument("--case", required=True, choices=sorted(cases.CASES))
    p.add_argument("--variant", default="pressure", choices=sorted(cases.TEST3_VARIANTS),
                   help="parameter variant for test3")
    res = p.add_mutually_exclusive_group()
    res.add_argument("--n", type=int, help="cells per side")
    res.add_argument("--n-ladder", type=_ladder, metavar="A:B", help="mesh ladder n=A,2A,...,B")
    p.add_argument("--dt", type=float)
    p.add_argument("--dt-ladder", type=_dt_ladder, metavar="A:B", help="time-step ladder dt=A,A/2,...,B")
    p.add_argument("--tau", type=float, help="final time (defaults to the case's)")
    p.add_argument("--theta", type=int, choices=(0, 1), default=1)
    p.add_argument("--mode", choices=("newton", "lagged", "none"), default="newton")
    p.add_argument("--cutoff", type=float, metavar="N")
    p.add_argument("--baseline", action="store_true", help="use the three-field (u, p, T) solver")
    p.add_argument("--out", default=".", help="output directory (THERMOPORO_OUT overrides)")
    p.add_argument("--emit", default="errors", help=f"comma list from {','.join(EMIT_CHOICES)}")
    return p


def _case(args, dt=None):
    kw = {}
    if dt is not None:
        kw["dt"] = dt
    if args.tau is not None and args.case in ("test2", "test3"):
        kw["tau"] = args.tau
    if args.case == "test3":
        kw["variant"] = args.variant
    return cases.get_case(args.case, **kw)


def _config(args, case) -> SchemeConfig:
    t_final = args.tau if args.tau is not None else case.tau
    return SchemeConfig(theta=args.theta, dt=case.dt, t_final=t_final, convective_mode=args.mode,
                        cutoff=args.cutoff)


def emit_field_grid(state: State, mesh_or_ctx, out) -> list[Path]:
    """Write ``p.csv``, ``T.csv`` (``x,y,value`` at vertices) and ``u.csv`` (``x,y,ux,uy`` at P2 nodes)."""
    from .assembly import as_context
    ctx = as_context(mesh_or_ctx)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    verts = ctx.mesh.vertices
    paths = []
    for name, vals in (("p", state.p), ("T", state.T)):
        path = out / f"{name}.csv"
        _write_rows(path, ["x", "y", "value"], np.column_stack([verts, vals]))
        paths.append(path)
    n2 = ctx.dofs.n_p2
    path = out / "u.csv"
    _write_rows(path, ["x", "y", "ux", "uy"],
                np.column_stack([ctx.dofs.p2_coords, state.u[:n2], state.u[n2:]]))
    paths.append(path)
    return paths


def _write_rows(path: Path, header, rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])


def read_field_grid(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def _single_run(args, emit, out: Path) -> None:
    case = _case(args, args.dt)
    cfg = _config(args, case)
    mesh = build_unit_square(args.n or 8)
    cls = ThreeFieldSolver if args.baseline else MFEMSolver
    if args.baseline and cfg.convective_mode == "newton":
        cfg = replace(cfg, convective_mode="lagged")
    solver = cls(case, mesh, replace(cfg, keep_all="energy" in emit))
    diag_rows = []
    traj = solver.run(on_step=lambda s: diag_rows.append(s.diagnostics))
    final = traj.final
    if "diagnostics" in emit:
        _write_diagnostics(out / "diagnostics.csv", diag_rows)
    if "fields" in emit:
        emit_field_grid(final, solver.ops.ctx, out)
    if "energy" in emit and not args.baseline:
        series = analysis.energy_series(traj, solver)
        _write_rows(out / "energy.csv", ["t", "energy"],
                    np.column_stack([[s.t for s in traj.states], series]))
    if "errors" in emit and case.exact is not None:
        report = analysis.ErrorReport()
        report.add(mesh.h, analysis.state_errors(final, solver.ops.ctx, case))
        report.to_csv(out / "errors.csv")
        print(report.format_table())
    print(f"t={final.t:g}  p-oscillation={analysis.oscillation_indicator(final.p):.4g}  "
          f"T-oscillation={analysis.oscillation_indicator(final.T):.4g}")


def _write_diagnostics(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "newton_iterations", "final_increment", "linear_residual"])
        for d in rows:
            w.writerow([repr(d.t), d.newton_iterations, repr(d.final_increment), repr(d.linear_residual)])


def _spatial(args, emit, out: Path) -> None:
    case = _case(args, args.dt)
    cfg = replace(_config(args, case), keep_all=False)
    ns = halving(*args.n_ladder, integer=True)
    report = analysis.spatial_ladder(case, ns, cfg, baseline=args.baseline)
    if "errors" in emit:
        report.to_csv(out / "errors.csv")
    print(report.format_table())


def _temporal(args, emit, out: Path) -> None:
    dts = halving(*args.dt_ladder, integer=False)
    probe = _case(args, dts[0])
    cfg = replace(_config(args, probe), keep_all=False)
    ladder = analysis.time_ladder(lambda dt: _case(args, dt), args.n or 8, dts, cfg)
    if "errors" in emit:
        ladder.to_csv(out / "time_ladder.csv")
    print(ladder.to_csv(), end="")
    if ladder.noise_level:
        print("note: all differences are at rounding level; ratios carry no information")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
        emit = {e.strip() for e in args.emit.split(",") if e.strip()}
        bad = emit - set(EMIT_CHOICES)
        if bad:
            raise UsageError(f"unknown --emit entries: {','.join(sorted(bad))}")
        if args.n_ladder and args.dt_ladder:
            raise UsageError("choose either --n-ladder or --dt-ladder")
        if args.baseline and args.dt_ladder:
            raise UsageError("--baseline supports single runs and spatial ladders only")
        if args.dt is not None and args.dt <= 0 or args.n is not None and args.n <= 0:
            raise UsageError("--n and --dt must be positive")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"thermoporo: error: {exc}", file=sys.stderr)
        return 1
    out = Path(os.environ.get("THERMOPORO_OUT") or args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.n_ladder:
            _spatial(args, emit, out)
        elif args.dt_ladder:
            _temporal(args, emit, out)
        else:
            _single_run(args, emit, out)
    except SolverError as exc:
        print(f"thermoporo: solver failure: {exc}", file=sys.stderr)
        for key, val in exc.diagnostics.items():
            print(f"  {key}: {val}", file=sys.stderr)
        return 2
    except (ParameterError, ValueError) as exc:
        print(f"thermoporo: error: {exc}", file=sys.stderr)
        return 1
    return 0
