"""Compare the compiled and pure NumPy kernel backends.

Times every hot kernel on desk-scale inputs under both implementations and
reports the speedup, then times a full forward step per backend in fresh
interpreters (backend selection happens at import, so the end-to-end rows
need separate processes).  Meant for eyeballing, not CI.

Usage: python benchmarks/bench_kernels.py [--nx NX] [--steps N]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tumorsmc import _kernels_py, coeffs, fem

try:
    from tumorsmc import _kernels
except ImportError:
    _kernels = None


def per_call(fn) -> float:
    loops, total = timeit.Timer(fn).autorange()
    return total / loops


def fmt(seconds: float) -> str:
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f} us"
    if seconds < 1.0:
        return f"{seconds * 1e3:8.2f} ms"
    return f"{seconds:8.2f} s "


def kernel_rows(nx: int):
    cfg = coeffs.CoeffConfig()
    mesh = fem.build_mesh((-5.0, 5.0, -5.0, 5.0), nx, nx)
    asm = fem.get_assembler(mesh)
    rng = np.random.default_rng(0)
    phi = rng.uniform(-1.1, 1.1, mesh.n_nodes)
    sig = rng.uniform(-0.5, 1.5, mesh.n_nodes)
    out = np.empty(mesh.n_nodes)
    tris = mesh.triangles
    wbar = np.empty(len(tris))
    wtri = np.ascontiguousarray(phi[tris])
    nnz_data = np.empty(asm.nnz)

    def calls(k):
        return [
            ("f_prolif_arr", lambda: k.f_prolif_arr(phi, out)),
            ("h_consume_arr", lambda: k.h_consume_arr(phi, out)),
            ("mobility_arr", lambda: k.mobility_arr(phi, cfg.m0, cfg.m1, out)),
            ("g_nutrient_arr", lambda: k.g_nutrient_arr(sig, cfg.m_cap, cfg.theta, out)),
            ("psi_prime_arr", lambda: k.psi_prime_arr(phi, cfg.s, cfg.rho, out)),
            ("psi_second_arr", lambda: k.psi_second_arr(phi, cfg.s, cfg.rho, out)),
            ("tri_mean", lambda: k.tri_mean(phi, tris, wbar)),
            ("scatter_stiffness", lambda: k.scatter_stiffness(wbar, asm.grad_block, asm.slots, nnz_data)),
            ("scatter_weighted_mass", lambda: k.scatter_weighted_mass(wtri, asm.area, asm.slots, nnz_data)),
        ]

    py = {name: per_call(fn) for name, fn in calls(_kernels_py)}
    cy = {name: per_call(fn) for name, fn in calls(_kernels)} if _kernels else {}
    return py, cy


def forward_step_time(nx: int, steps: int, pure: bool) -> tuple[str, float]:
    code = (
        "import time\n"
        "from tumorsmc import backend, coeffs, fem, forward\n"
        f"mesh = fem.build_mesh((-5.0, 5.0, -5.0, 5.0), {nx}, {nx})\n"
        f"grid = forward.TimeGrid({steps} * 0.05, 0.05)\n"
        "op = forward.ForwardOperator(mesh, coeffs.CoeffConfig(eps=0.2), grid)\n"
        "params = forward.ModelParams(7.0, 120.0, 2.0)\n"
        "op.simulate(params)\n"
        "t0 = time.perf_counter()\n"
        "op.simulate(params)\n"
        f"print(backend(), (time.perf_counter() - t0) / {steps})\n"
    )
    env = dict(os.environ)
    env.pop("TUMORSMC_PURE_PY", None)
    if pure:
        env["TUMORSMC_PURE_PY"] = "1"
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    name, t = out.stdout.split()
    return name, float(t)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=64, help="cells per side (default 64)")
    ap.add_argument("--steps", type=int, default=10, help="forward steps to average (default 10)")
    args = ap.parse_args(argv)

    py, cy = kernel_rows(args.nx)
    print(f"mesh {args.nx}x{args.nx}, {(args.nx + 1) ** 2} nodes, {2 * args.nx ** 2} triangles")
    print(f"{'kernel':24s} {'python':>11s} {'cython':>11s} {'speedup':>9s}")
    for name, t_py in py.items():
        if cy:
            t_cy = cy[name]
            print(f"{name:24s} {fmt(t_py)} {fmt(t_cy)} {t_py / t_cy:8.1f}x")
        else:
            print(f"{name:24s} {fmt(t_py)} {'-':>11s} {'-':>9s}")

    rows = [forward_step_time(args.nx, args.steps, pure=True)]
    if _kernels:
        rows.append(forward_step_time(args.nx, args.steps, pure=False))
    print()
    for name, t in rows:
        print(f"forward step ({name})     {fmt(t)}")
    if len(rows) == 2:
        print(f"end-to-end speedup       {rows[0][1] / rows[1][1]:8.1f}x")
    if not _kernels:
        print("compiled backend not built; python column only")
    return 0


if __name__ == "__main__":
    sys.exit(main())
