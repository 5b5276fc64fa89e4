"""Numba vs numpy timings for the two hot kernels.

    python3 benchmarks/bench_kernels.py [--reps 1000000] [--repeat 5]

Both backends consume the same random draws; the script checks that their
outputs agree before reporting timings.  The first numba call (compilation or
cache load) is timed separately.
"""

import argparse
import time

import numpy as np

from acqgame import _accel, kernels
from acqgame.model import Control, TwoStagePolicy


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def simulate_case(reps, n_agents, segments):
    rng = np.random.default_rng(0)
    T = 3.0
    bp = np.linspace(0, T, segments + 1)
    stage1 = [Control(bp, rng.uniform(0, 1, segments), 1.0) for _ in range(n_agents)]
    g = TwoStagePolicy.gamma2(1.0, 1.0, T)
    P1 = kernels.pack(stage1)
    PS = kernels.pack([g.on_success] * n_agents)
    PF = kernels.pack([g.on_failure] * n_agents)
    E1 = rng.standard_exponential((n_agents, reps))
    U = rng.random((n_agents, reps))
    E2 = rng.standard_exponential((n_agents, reps))
    return lambda backend: kernels.simulate_block(T, 2, P1, PS, PF, E1, U, E2, backend=backend)


def enumerate_case(n, L):
    rng = np.random.default_rng(1)
    phi = rng.normal(size=(n, L))
    decay = rng.uniform(0.5, 1.0, size=(n, L))
    return lambda backend: kernels.enumerate_levels(phi, decay, backend=backend)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit(f"numba unavailable (or {_accel.DISABLE_ENV} set); nothing to compare")

    cases = [
        (f"simulate_block 2 agents x {args.reps} reps, 8 segments", simulate_case(args.reps, 2, 8)),
        (f"simulate_block 3 agents x {args.reps} reps, 40 segments", simulate_case(args.reps, 3, 40)),
        ("enumerate_levels 2^16 vectors (16 segments x 2 levels)", enumerate_case(16, 2)),
        ("enumerate_levels 3^12 vectors (12 segments x 3 levels)", enumerate_case(12, 3)),
    ]
    print(f"{'kernel':58s} {'first numba':>12s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, run in cases:
        t0 = time.perf_counter()
        a = run("numba")
        first = time.perf_counter() - t0
        b = run("numpy")
        for x, y in zip(a, b):
            np.testing.assert_allclose(np.asarray(x, dtype=float), np.asarray(y, dtype=float), rtol=0, atol=1e-12)
        t_nb = best_of(lambda: run("numba"), args.repeat)
        t_np = best_of(lambda: run("numpy"), args.repeat)
        print(f"{name:58s} {first:11.3f}s {t_nb:9.4f}s {t_np:9.4f}s {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
