"""Time the element kernels and full assemblies under both backends.

    python3 benchmarks/bench_kernels.py [--n 64] [--repeat 5]

The numba backend is warmed up once before timing so JIT compilation is not
counted.  Results are medians over ``--repeat`` runs.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from thermoporo import assembly as asm
from thermoporo import kernels
from thermoporo.mesh import build_unit_square


def _median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def workloads(ctx):
    rng = np.random.default_rng(0)
    T, p = rng.standard_normal((2, ctx.dofs.n_p1))
    w = rng.standard_normal((len(ctx.area), 2))
    K = np.array([[2.0, 0.3], [0.3, 1.0]])
    return {
        "elasticity_local": lambda: kernels.elasticity_local(ctx.grad2, ctx.wdet, 1.0),
        "p1_stiffness_local": lambda: kernels.p1_stiffness_local(ctx.grad1, ctx.area, K),
        "divdiv_local": lambda: kernels.divdiv_local(ctx.grad2, ctx.wdet),
        "div_coupling_local": lambda: kernels.div_coupling_local(ctx.grad2, ctx.phi1, ctx.wdet),
        "convection_local": lambda: kernels.convection_local(ctx.grad1, ctx.area, w),
        "elasticity_p2 (global)": lambda: asm.elasticity_p2(ctx, 1.0),
        "convection_forms (global)": lambda: asm.convection_forms(ctx, T, p, K),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not kernels._HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    ctx = asm.FEContext.from_mesh(build_unit_square(args.n))
    saved = kernels.get_backend()
    results = {}
    try:
        for backend in ("numba", "numpy"):
            kernels.set_backend(backend)
            for name, fn in workloads(ctx).items():
                fn()  # warm-up / JIT
                results[(name, backend)] = _median_time(fn, args.repeat)
    finally:
        kernels.set_backend(saved)
    print(f"n={args.n}  elements={ctx.mesh.n_triangles}  median of {args.repeat}")
    print(f"{'workload':<28}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}")
    for name in workloads(ctx):
        a, b = results[(name, "numba")], results[(name, "numpy")]
        print(f"{name:<28}{1e3 * a:>12.2f}{1e3 * b:>12.2f}{b / a:>10.2f}")


if __name__ == "__main__":
    main()
