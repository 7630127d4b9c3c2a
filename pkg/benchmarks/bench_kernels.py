#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Times the four hot kernels on a fundus-scale 512x512 synthetic mask and
prints per-kernel medians plus speedups. The numba timings exclude JIT
compilation (one warm-up call per kernel).

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import statistics
import time

import numpy as np

from vesseltree import synth
from vesseltree._kernels import load_backend
from vesseltree.hint import GAUSS_KERNEL


def _fixture():
    tree, _ = synth.generate_tree(synth.SynthSpec(
        seed=5, depth=7, root_radius=3.0, radius_decay=0.85))
    mask = synth.rasterize_tree(tree).pixels
    rng = np.random.default_rng(0)
    xs = rng.uniform(0, 511, 20_000)
    ys = rng.uniform(0, 511, 20_000)
    rs = rng.uniform(0.0, 4.0, 20_000)
    padded = np.pad(rng.random((512, 512)), 3, mode="reflect")
    return mask, (xs, ys, rs), padded


def _time(fn, repeats):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    mask, (xs, ys, rs), padded = _fixture()
    backends = {}
    for name in ("numpy", "numba"):
        try:
            backends[name] = load_backend(name)
        except ImportError:
            print(f"backend {name} unavailable, skipping")
    if "numba" in backends:
        b = backends["numba"]
        b.thin_mask(mask[:32, :32].copy())
        b.edt(mask[:32, :32].copy())
        warm = np.zeros((32, 32), dtype=np.uint8)
        b.stamp_disks(warm, xs[:10], ys[:10], rs[:10])
        b.convolve7(padded[:38, :38], GAUSS_KERNEL)

    cases = {
        "thin_mask (512x512)": lambda b: b.thin_mask(mask),
        "edt (512x512)": lambda b: b.edt(mask),
        "stamp_disks (20k disks)": lambda b: b.stamp_disks(
            np.zeros((512, 512), dtype=np.uint8), xs, ys, rs),
        "convolve7 (512x512)": lambda b: b.convolve7(padded, GAUSS_KERNEL),
    }

    width = max(len(k) for k in cases)
    header = f"{'kernel'.ljust(width)}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, call in cases.items():
        times = {}
        for name, backend in backends.items():
            times[name] = _time(lambda: call(backend), args.repeats)
        np_t = times.get("numpy")
        nb_t = times.get("numba")
        speedup = f"{np_t / nb_t:7.1f}x" if np_t and nb_t else "     n/a"
        fmt = lambda t: f"{t * 1000:8.1f}ms" if t is not None else "      n/a"
        print(f"{label.ljust(width)}  {fmt(np_t)}  {fmt(nb_t)}  {speedup}")

    for name, backend in backends.items():
        out = backend.thin_mask(mask)
        ref = backends["numpy"].thin_mask(mask)
        assert np.array_equal(out, ref), f"{name} thinning diverged from reference"
    print("\nbackends agree bit-for-bit on the thinning fixture")


if __name__ == "__main__":
    main()
