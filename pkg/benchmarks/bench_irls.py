#!/usr/bin/env python3
"""Benchmark the compiled IRLS kernel against the pure-numpy fallback.

The logistic propensity fit is the hot kernel of the Monte Carlo harness
(one fit per replicate), so this measures both the bare kernel across
problem sizes and an end-to-end replicate loop.

Usage: python benchmarks/bench_irls.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from rctweights import _backend, _irls_py
from rctweights.propensity import fit_logistic
from rctweights.simulation import Scenario, _draw_replicate, replicate_rng
from rctweights.weighting import OVERLAP, hajek_means, unit_weights
from rctweights.variance import ow_sandwich_variance


def bench_kernel(kernel, design, z, repeats):
    # warm up once, then time the batch
    kernel(design, z, 1e-8, 100, 1e-12, 10)
    start = time.perf_counter()
    for _ in range(repeats):
        kernel(design, z, 1e-8, 100, 1e-12, 10)
    return (time.perf_counter() - start) / repeats


def bench_replicate_loop(n, replicates):
    sc = Scenario(n=n, r=0.5, b1=0.0, dgp="model1", replicates=replicates, seed=7)
    start = time.perf_counter()
    for i in range(replicates):
        ds, _ = _draw_replicate(sc, replicate_rng(sc, i))
        fit = fit_logistic(ds)
        w = unit_weights(OVERLAP, fit.propensities, ds.z)
        mu1, mu0 = hajek_means(ds.y, ds.z, w)
        ow_sandwich_variance(ds, fit, mu1, mu0, "rd")
    return (time.perf_counter() - start) / replicates


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    try:
        from rctweights import _irls as compiled
    except ImportError:
        compiled = None

    print(f"active backend: {_backend.backend_name()}")
    print()
    print(f"{'N':>6} {'p':>3} {'python (ms)':>12} {'compiled (ms)':>14} {'speedup':>8}")
    rng = np.random.default_rng(0)
    for n, p in [(50, 10), (200, 10), (500, 10), (2000, 10), (500, 2), (5000, 20)]:
        x = rng.standard_normal((n, p))
        z = (rng.random(n) < 0.5).astype(np.float64)
        design = np.ascontiguousarray(np.column_stack([np.ones(n), x]))
        t_py = bench_kernel(_irls_py.irls_logistic, design, z, args.repeats)
        if compiled is not None:
            t_c = bench_kernel(compiled.irls_logistic, design, z, args.repeats)
            print(f"{n:>6} {p:>3} {t_py * 1e3:>12.3f} {t_c * 1e3:>14.3f} {t_py / t_c:>7.1f}x")
        else:
            print(f"{n:>6} {p:>3} {t_py * 1e3:>12.3f} {'-':>14} {'-':>8}")

    print()
    print("end-to-end replicate loop (fit + overlap estimate + sandwich), active backend:")
    for n in (50, 500):
        per = bench_replicate_loop(n, 300)
        print(f"  N={n:>4}: {per * 1e3:.3f} ms/replicate")


if __name__ == "__main__":
    main()
