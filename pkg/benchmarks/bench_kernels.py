"""Compare the compiled and numpy kernel backends on representative workloads.

Usage:
    python benchmarks/bench_kernels.py [--repeat 200] [--mu 64 256 1024]

Also reports the ADP-1 scan time as a function of mu * M, which should grow
linearly.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from adpmpc import kernels
from adpmpc.multitank import TankParams


def _time(fn, repeat: int) -> float:
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--mu", type=int, nargs="+", default=[64, 256, 1024])
    args = ap.parse_args(argv)
    if not kernels.compiled_available():
        raise SystemExit("compiled backend not built; run `pip install -e . --no-build-isolation`")
    py = kernels.backend_module("python")
    cy = kernels.backend_module("cython")
    rng = np.random.default_rng(0)
    p = TankParams().vector()
    lo, hi = np.zeros(3), np.full(3, 0.35)
    H = rng.uniform(0.05, 0.3, (6, 3))
    u = np.linspace(0.54, 1.0, 6)

    rows = []
    rows.append(("tank_step_batch k=6", *[
        _time(lambda b=b: b.tank_step_batch(H, u, p, 0.01, 1, 0, lo, hi), args.repeat) for b in (py, cy)
    ]))
    x0 = np.array([0.1, 0.08, 0.09])
    Q = np.eye(3)
    rc = np.zeros(6)
    for N in (3, 4):
        rows.append((f"nmpc_tank M=6 N={N}", *[
            _time(lambda b=b, N=N: b.nmpc_tank(x0, u, rc, x0 + 0.01, Q, Q, N, p, 0.01, 1, 0, lo, hi),
                  max(3, args.repeat // 50)) for b in (py, cy)
        ]))
    scan_rows = []
    for mu in args.mu:
        A = rng.standard_normal((mu, 4, 4))
        P = np.einsum("kij,klj->kil", A, A)
        X = rng.standard_normal((6, 4))
        st = rng.random(6)
        t_py = _time(lambda: py.adp_scan(X, st, P, None), args.repeat)
        t_cy = _time(lambda: cy.adp_scan(X, st, P, None), args.repeat)
        rows.append((f"adp_scan mu={mu} M=6", t_py, t_cy))
        scan_rows.append((mu * 6, t_cy))

    print(f"{'kernel':<24}{'numpy [s]':>14}{'cython [s]':>14}{'speedup':>10}")
    for name, a, b in rows:
        print(f"{name:<24}{a:>14.3e}{b:>14.3e}{a / b:>10.1f}")
    x = np.array([r[0] for r in scan_rows], dtype=float)
    y = np.array([r[1] for r in scan_rows])
    slope, icpt = np.polyfit(x, y, 1)
    print(f"\ncompiled scan time ~ {icpt:.2e} s + {slope:.2e} s * (mu*M)")


if __name__ == "__main__":
    main()
