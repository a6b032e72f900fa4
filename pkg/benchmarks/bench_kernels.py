#!/usr/bin/env python3
"""Benchmark the compiled kernel lane against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--size 1024] [--repeat 5]
Checks bit-equality of the lanes on each workload while timing them.
"""

from __future__ import annotations

import argparse
import importlib
import time

import numpy as np


def _load_lanes():
    numpy_lane = importlib.import_module("facade_pipeline.kernels._numpy")
    try:
        native_lane = importlib.import_module("facade_pipeline.kernels._native")
    except ImportError:
        native_lane = None
    return native_lane, numpy_lane


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=1024)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    native, fallback = _load_lanes()
    if native is None:
        print("native lane not built; run pip install -e . --no-build-isolation")
        return

    n = args.size
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (n, n), dtype=np.uint8)
    img2 = img.copy()
    img2[n // 2, n // 2] ^= 0xFF
    rgb = rng.integers(0, 256, (n, n, 3), dtype=np.uint8)
    boxes = np.array(
        [[0.1, 0.1, 0.4, 0.5], [0.5, 0.2, 0.9, 0.8], [0.05, 0.6, 0.3, 0.95]],
        dtype=np.float64,
    )
    mask = fallback.box_mask(n, n, boxes)
    patch = rng.integers(0, 256, (n // 2, n // 2), dtype=np.uint8)
    ea, eb = fallback.edge_map(img, 64), fallback.edge_map(img2, 64)

    workloads = {
        "edge_map": lambda lane: lane.edge_map(img, 64),
        "box_mask": lambda lane: lane.box_mask(n, n, boxes),
        "equal_outside": lambda lane: lane.equal_outside(img, img2, mask),
        "luminance": lambda lane: lane.luminance(rgb),
        "mask_iou": lambda lane: lane.mask_iou(ea, eb),
        "blend_min": None,  # handled below: mutates its input
    }

    print(f"size {n}x{n}, best of {args.repeat}")
    print(f"{'kernel':<14} {'native':>10} {'numpy':>10} {'speedup':>8}")
    for name, fn in workloads.items():
        if name == "blend_min":
            def run_blend(lane):
                dst = img.copy()
                lane.blend_min(dst, patch, n // 4, n // 4)
                return dst
            a, b = run_blend(native), run_blend(fallback)
            t_nat = _time(lambda: run_blend(native), args.repeat)
            t_py = _time(lambda: run_blend(fallback), args.repeat)
        else:
            a, b = fn(native), fn(fallback)
            t_nat = _time(lambda: fn(native), args.repeat)
            t_py = _time(lambda: fn(fallback), args.repeat)
        same = np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b
        assert same, f"lanes disagree on {name}"
        print(f"{name:<14} {t_nat * 1e3:>8.2f}ms {t_py * 1e3:>8.2f}ms {t_py / t_nat:>7.2f}x")


if __name__ == "__main__":
    main()
