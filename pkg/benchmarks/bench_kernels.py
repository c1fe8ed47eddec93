#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three hot kernels (residuals, Jacobian, P_n sums) on the 6x6
benchmark sizes, plus an end-to-end Newton solve under each backend by
re-running this script in a subprocess with RICHARDSON_PURE_NUMPY=1.

Run: python benchmarks/bench_kernels.py [--repeats N] [--skip-subprocess]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def time_call(fn, *args, repeats=2000):
    fn(*args)                       # warm up (jit compile)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def bench_kernels(repeats):
    from richardson import _kernels as kern
    import richardson as rs

    p = rs.build_lattice_model(6, 18).with_g(-0.03)
    occ = rs.ground_occupation(p)
    state = rs.init_weak_coupling(p, occ, -1e-3)
    e = np.array(state.values)
    eta2, d = p.eta2_array(), p.d_array()

    rows = []
    pairs = [
        ("residuals", kern.residuals, kern.residuals_numpy,
         (e, -0.03, eta2, d)),
        ("jacobian", kern.jacobian, kern.jacobian_numpy,
         (e, -0.03, eta2, d)),
        ("pn_sums", kern.pn_sums, kern.pn_sums_numpy,
         (eta2, d, 3, e[:13], 9)),
    ]
    for name, active, fallback, args in pairs:
        t_active = time_call(active, *args, repeats=repeats)
        t_numpy = time_call(fallback, *args, repeats=repeats)
        rows.append((name, t_active, t_numpy))
    print(f"backend: {kern.backend_name()}")
    print(f"{'kernel':<12} {'active [us]':>12} {'numpy [us]':>12} {'speedup':>8}")
    for name, ta, tn in rows:
        print(f"{name:<12} {ta * 1e6:>12.2f} {tn * 1e6:>12.2f} "
              f"{tn / ta:>8.2f}x")


def bench_newton():
    import richardson as rs

    p = rs.build_lattice_model(6, 18)
    occ = rs.ground_occupation(p)
    state = rs.init_weak_coupling(p, occ, -1e-3)
    cur = rs.newton_solve(state, p.with_g(-1e-3)).final     # warm up
    t0 = time.perf_counter()
    for gv in np.linspace(-1e-3, -0.03, 40):
        rep = rs.newton_solve(cur, p.with_g(gv))
        cur = rep.final
    elapsed = time.perf_counter() - t0
    from richardson import _kernels as kern
    print(f"newton walk (40 steps, M=18), {kern.backend_name()}: "
          f"{elapsed * 1e3:.1f} ms")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=2000)
    ap.add_argument("--skip-subprocess", action="store_true")
    ap.add_argument("--newton-only", action="store_true")
    args = ap.parse_args()

    if args.newton_only:
        bench_newton()
        return

    bench_kernels(args.repeats)
    bench_newton()
    if not args.skip_subprocess and \
            os.environ.get("RICHARDSON_PURE_NUMPY", "") == "":
        print("\n--- pure-numpy backend (subprocess) ---")
        env = dict(os.environ, RICHARDSON_PURE_NUMPY="1")
        subprocess.run([sys.executable, __file__, "--newton-only"], env=env,
                       check=False)


if __name__ == "__main__":
    main()
