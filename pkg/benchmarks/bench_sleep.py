"""Benchmark the replay loop: compiled kernel vs the numpy fallback.

Runs the same sleep configuration through both paths, checks the resulting
weights are bit-identical, and reports wall-clock times and the speedup.

    python3 benchmarks/bench_sleep.py [--steps N] [--repeats K]
"""

import argparse
import time

import numpy as np

from srcal.data import generate_synthetic
from srcal.network import build_network
from srcal.sleep import (USE_FAST_KERNEL, SleepConfig,
                         compute_input_statistics, compute_layer_scales,
                         sleep)


def timed(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    data = generate_synthetic(10, 32, 4000, separation=0.55, cluster_std=1.0,
                              seed=1)
    net = build_network([32, 64, 64, 32, 10], 1, 7, head_bias=False)
    cfg = SleepConfig(steps=args.steps, dt=0.001, decay=0.95, max_rate=120.0,
                      stdp_pos=1e-4, stdp_neg=-2e-4,
                      thresholds=[1.0, 1.0, 1.0], seed=3)
    stats = compute_input_statistics(net, data)
    scales = compute_layer_scales(net, data)

    slow, t_py = timed(lambda: sleep(net, data, cfg, stats=stats,
                                     scales=scales, force_python=True),
                       args.repeats)
    print(f"numpy fallback : {t_py * 1e3:8.2f} ms "
          f"({args.steps} steps, head 64-64-32-10)")

    if not USE_FAST_KERNEL:
        print("compiled kernel: unavailable (pure-python install)")
        return

    fast, t_c = timed(lambda: sleep(net, data, cfg, stats=stats,
                                    scales=scales), args.repeats)
    print(f"compiled kernel: {t_c * 1e3:8.2f} ms")
    print(f"speedup        : {t_py / t_c:8.2f}x")

    identical = all(np.array_equal(a.weights, b.weights)
                    for a, b in zip(slow.head_layers, fast.head_layers))
    print(f"bit-identical  : {identical}")
    if not identical:
        raise SystemExit("kernel and fallback disagree")


if __name__ == "__main__":
    main()
