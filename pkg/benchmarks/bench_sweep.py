#!/usr/bin/env python3
"""Compare the numba and numpy sweep kernels.

Times one MH sweep over all buckets (the per-iteration hot loop) and a short
full chain, for each backend, on the 100 x 10 log-normal study layout and a
larger one.

    python benchmarks/bench_sweep.py [--sweeps 2000] [--iters 20000]
"""
import argparse
import math
import time

import numpy as np

from disagg import _backend
from disagg.engine import SamplerConfig, run_chain
from disagg.kernels import BucketSweeper
from disagg.simdata import SimConfig, simulate_lognormal


def time_sweeps(truth, data, backend, n_sweeps):
    s = BucketSweeper(truth.values, data.n, data.y, np.full(data.K, 1.0), "lognormal",
                      backend=backend)
    gen = np.random.default_rng(0)
    mu, tau = math.log(250.0), 100.0
    s.sweep(mu, tau, gen)  # compile / warm up
    t0 = time.perf_counter()
    for _ in range(n_sweeps):
        s.sweep(mu, tau, gen)
    return (time.perf_counter() - t0) / n_sweeps


def time_chain(data, backend, n_iter):
    cfg = SamplerConfig(n_iter=n_iter, burn_in=n_iter // 10, thin=10, adapt="burn-in")
    run_chain(data, SamplerConfig(n_iter=20, burn_in=0), backend=backend)
    t0 = time.perf_counter()
    run_chain(data, cfg, backend=backend)
    return (time.perf_counter() - t0) / n_iter


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sweeps", type=int, default=2000)
    p.add_argument("--iters", type=int, default=20000)
    args = p.parse_args()

    backends = ["numpy"] + (["numba"] if _backend.HAVE_NUMBA else [])
    print(f"{'layout':>12} {'backend':>8} {'sweep us':>10} {'iter us':>10} {'1e6 iters':>10}")
    for K, n in ((100, 10), (1000, 10), (100, 100)):
        truth, data = simulate_lognormal(SimConfig(K=K, n=n, seed=1))
        for b in backends:
            sweep = time_sweeps(truth, data, b, args.sweeps)
            it = time_chain(data, b, args.iters)
            print(f"{f'{K}x{n}':>12} {b:>8} {sweep * 1e6:10.1f} {it * 1e6:10.1f} "
                  f"{it * 1e6 / 60:9.1f}m")


if __name__ == "__main__":
    main()
