"""Compare the numba kernels with their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--rollouts 500]

Each kernel is checked for agreement before timing. Numba compile time is
excluded by a warm-up call.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from tgcmpc import kernels
from tgcmpc._accel import USE_NUMBA
from tgcmpc.vehicle import build_uncertain_model, discretize, table1_vehicle


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rollouts: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    p = table1_vehicle()
    d = discretize(build_uncertain_model(p, 15.0), 0.025)
    K = np.array([[0.3, 4.0, 0.2, 0.15]])
    Cc = np.eye(4)
    Dc = np.ones((4, 1)) * 0.1
    X0 = rng.normal(size=(rollouts, 4))
    G = rng.uniform(-1, 1, size=(rollouts, 200, 2))
    gcc_args = (d.Ad, d.Bdu, d.Bdw, d.Cy, d.Dyu, K, Cc, Dc, X0, G)

    N = 10
    Z = rng.normal(size=(rollouts, N + 1, 4)) * 0.1
    NU = rng.normal(size=(rollouts, N)) * 0.01
    tube_args = (d.Ad, d.Bdu, d.Bdw, d.Cy, d.Dyu, K, K * 2, np.eye(4), Z, NU, X0, G[:, :N])

    veh = kernels.pack_vehicle(p)
    state0 = np.array([20.0, 0.3, 0.2, 0.0, 0.0, 0.0])

    def integ(fn):
        def run():
            s = state0.copy()
            for _ in range(400):
                fn(s, veh, 0.05, 500.0, 0.0, 0.0, 0.001, 25, 0.1)
            return s

        return run

    return [
        ("gcc_rollouts", lambda nb: kernels.gcc_rollouts(*gcc_args, use_numba=nb)),
        ("tube_rollouts", lambda nb: kernels.tube_rollouts(*tube_args, use_numba=nb)),
        ("integrate (10 s truth)", lambda nb: integ(kernels.integrate_numba if nb else kernels.integrate_numpy)()),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rollouts", type=int, default=500)
    args = ap.parse_args(argv)
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, fn in cases(args.rollouts):
        if not USE_NUMBA:
            # the compiled variants are plain Python loops here; time only the fallback
            print(f"{name:<24}{best_of(lambda: fn(False), args.repeat) * 1e3:>12.2f}{'off':>12}{'-':>10}")
            continue
        a, b = fn(False), fn(True)
        a, b = (a if isinstance(a, tuple) else (a,)), (b if isinstance(b, tuple) else (b,))
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=1e-9, atol=1e-9)
        t_np = best_of(lambda: fn(False), args.repeat)
        t_nb = best_of(lambda: fn(True), args.repeat)
        print(f"{name:<24}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
