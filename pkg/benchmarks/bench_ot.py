"""Compiled vs pure-Python transportation solver on random dense instances.

    python3 benchmarks/bench_ot.py [--sizes 5 10 20 40] [--repeats 5]
"""

import argparse
import time

import numpy as np

from mmflow import _backend


def bench(solver, cases, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for a, b, C in cases:
            solver(a, b, C)
        best = min(best, time.perf_counter() - t0)
    return best / len(cases)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[5, 10, 20, 40])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    if _backend.solve_transport_ext is None:
        print("compiled extension not built; only the Python backend is timed")
    print(f"{'N':>5} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8} {'max |cost diff|':>16}")
    for n in args.sizes:
        cases = []
        for _ in range(args.instances):
            X = rng.uniform(size=(n, 2))
            C = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
            cases.append((rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n)), C))
        t_py = bench(_backend.solve_transport_py, cases, args.repeats)
        if _backend.solve_transport_ext is not None:
            t_cy = bench(_backend.solve_transport_ext, cases, args.repeats)
            diff = max(
                abs(_backend.solve_transport_py(*c)[1] - _backend.solve_transport_ext(*c)[1]) for c in cases
            )
            print(f"{n:5d} {1e3 * t_py:12.3f} {1e3 * t_cy:12.3f} {t_py / t_cy:8.1f} {diff:16.2e}")
        else:
            print(f"{n:5d} {1e3 * t_py:12.3f} {'-':>12} {'-':>8} {'-':>16}")


if __name__ == "__main__":
    main()
