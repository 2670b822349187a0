#!/usr/bin/env python3
"""Benchmark the compiled vs NumPy convolution backends.

Times the forward+backward convolution work of one training step (the layer
shapes of the default network under a semi-supervised batch) and a full
training step through the trainer, then prints a comparison table.

    python3 benchmarks/bench_kernels.py [--size 64] [--repeats 5]
"""

import argparse
import time

import numpy as np

from ssrl import kernels
from ssrl.model import UNetConfig, layer_plan
from ssrl.phantom import PhantomConfig, generate, split
from ssrl.trainer import TrainConfig, train


def conv_workload(size: int, batch: int):
    """(x, w, b) triples for every conv of the default net at this input size."""
    cfg = UNetConfig()
    rng = np.random.default_rng(0)
    shapes = []
    for name, out_c, in_c, k in layer_plan(cfg):
        if name.startswith(("enc", "dec")):
            level = int(name[3:-1])
        elif name.startswith("bot"):
            level = cfg.depth
        else:  # head runs at full resolution
            level = 0
        shapes.append((batch, in_c, out_c, size >> level, k))
    return [(rng.standard_normal((b, c, h, h)).astype(np.float32),
             rng.standard_normal((o, c, k, k)).astype(np.float32),
             np.zeros(o, dtype=np.float32))
            for b, c, o, h, k in shapes]


def time_kernels(backend, workload, repeats: int) -> float:
    be = kernels.get_backend(backend)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for x, w, b in workload:
            y = be.conv2d_forward(x, w, b)
            be.conv2d_backward(x, w, y)
        best = min(best, time.perf_counter() - t0)
    return best


def time_train_step(backend: str, size: int, repeats: int) -> float:
    previous = kernels.use_backend(backend)
    try:
        samples = generate(PhantomConfig(size=size, seed=1), 16)
        labeled, unlabeled = split(samples, 0.5, seed=0)
        cfg = TrainConfig(mode="semi_threshold", steps=3, seed=0)
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            train(cfg, labeled, unlabeled)
            best = min(best, (time.perf_counter() - t0) / cfg.steps)
        return best
    finally:
        kernels.use_backend(previous)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built (run: python3 setup.py build_ext "
              "--inplace); benchmarking the NumPy fallback only")

    workload = conv_workload(args.size, batch=24)
    macs = sum(3 * x.shape[0] * w.shape[0] * w.shape[1] * w.shape[2] ** 2
               * x.shape[2] * x.shape[3] for x, w, _ in workload)

    print(f"conv forward+backward workload, input {args.size}x{args.size}, "
          f"batch 24 ({macs / 1e9:.2f} GMAC):")
    results = {}
    for name in backends:
        dt = time_kernels(name, workload, args.repeats)
        results[name] = dt
        print(f"  {name:8s} {dt * 1e3:8.1f} ms   {macs / dt / 1e9:6.1f} GMAC/s")
    if len(results) == 2:
        print(f"  speedup  {results['numpy'] / results['cython']:.2f}x "
              "(cython over numpy)")

    print(f"\nfull semi-supervised training step ({args.size}x{args.size} "
          "phantoms, batches 8+8):")
    steps = {}
    for name in backends:
        dt = time_train_step(name, args.size, max(1, args.repeats // 2))
        steps[name] = dt
        print(f"  {name:8s} {dt * 1e3:8.0f} ms/step")
    if len(steps) == 2:
        print(f"  speedup  {steps['numpy'] / steps['cython']:.2f}x "
              "(cython over numpy)")


if __name__ == "__main__":
    main()
