"""Benchmark the compiled scoring kernels against the numpy fallback.

Times the three per-pixel kernels on synthetic inputs and the end-to-end
sample scorer with each backend swapped in. Run from the repo root:

    python benchmarks/bench_kernels.py [--height 512] [--width 512]
        [--channels 8] [--repeat 20]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from crosstask import _kernels
from crosstask.boxmask import ScoringConfig
from crosstask.inconsistency import score_sample
from crosstask.simulator import generate_world, predict_with_noise


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels(height: int, width: int, channels: int, repeat: int, calls: int = 1) -> list[tuple[str, dict[str, float]]]:
    rng = np.random.default_rng(7)
    labels = rng.integers(0, channels, size=(height, width)).astype(np.int32)
    mask = (rng.random((height, width)) < 0.35).astype(np.uint8)
    probs = rng.random((channels, height, width))
    probs /= probs.sum(axis=0, keepdims=True)
    probs = probs.astype(np.float32)
    ref = rng.random(channels)
    ref /= ref.sum()
    member = np.zeros(channels, dtype=np.uint8)
    member[: max(1, channels // 3)] = 1

    tag = f"{height}x{width}" + (f" x{calls}" if calls > 1 else "")
    cases = [
        (f"count_equal_where {tag}", lambda mod: mod.count_equal_where(labels, mask, 1)),
        (f"count_member_where {tag}", lambda mod: mod.count_member_where(labels, mask, member)),
        (f"sym_kl_sum_where {tag}", lambda mod: mod.sym_kl_sum_where(probs, mask, ref, 1e-6)),
    ]
    rows = []
    for name, call in cases:
        timings = {}
        for backend in _kernels.available_backends():
            mod = _kernels.get_backend(backend)
            timings[backend] = _time(lambda: [call(mod) for _ in range(calls)], repeat)
        rows.append((name, timings))
    return rows


def bench_end_to_end(repeat: int) -> tuple[str, dict[str, float]]:
    world = generate_world(16, seed=11, dims=(128, 128))
    records = [predict_with_noise(scene, 0.4, seed=11) for scene in world]
    config = ScoringConfig()
    original = _kernels.BACKEND
    timings = {}
    try:
        for backend in _kernels.available_backends():
            _kernels.set_backend(backend)
            timings[backend] = _time(
                lambda: [score_sample(r, world[0].space, config) for r in records], repeat
            )
    finally:
        _kernels.set_backend(original)
    return "score_sample x16 (128x128)", timings


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--height", type=int, default=512)
    parser.add_argument("--width", type=int, default=512)
    parser.add_argument("--channels", type=int, default=8)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    print(f"backends available: {', '.join(_kernels.available_backends())}")
    print(f"channels: {args.channels}\n")
    # full-frame calls, then crop-sized calls (the score pipeline's shape:
    # many small masked reductions, where per-call overhead dominates)
    rows = bench_kernels(args.height, args.width, args.channels, args.repeat)
    rows += bench_kernels(24, 24, args.channels, args.repeat, calls=256)
    rows.append(bench_end_to_end(max(3, args.repeat // 4)))

    header = f"{'kernel':<28} {'python':>12} {'compiled':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, timings in rows:
        py = timings.get("python")
        cy = timings.get("compiled")
        py_s = f"{py * 1e3:.3f} ms" if py is not None else "n/a"
        cy_s = f"{cy * 1e3:.3f} ms" if cy is not None else "n/a"
        speedup = f"{py / cy:.2f}x" if py and cy else "n/a"
        print(f"{name:<28} {py_s:>12} {cy_s:>12} {speedup:>9}")


if __name__ == "__main__":
    main()
