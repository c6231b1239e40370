"""Benchmark: compiled kernels vs the pure numpy fallback.

Times the raw conv/pool kernels and an end-to-end attribution run on a
small CNN under both backends.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

import localattr as la
from localattr import kernels


def time_call(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def kernel_cases(rng):
    """Small cases mirror the desk-scale attribution workload (batched 8x8
    training steps); the large conv case shows where BLAS-backed numpy wins."""
    xs = np.ascontiguousarray(rng.normal(size=(32, 8, 8, 8)))
    ws = np.ascontiguousarray(rng.normal(size=(16, 8, 3, 3)))
    gs = np.ascontiguousarray(rng.normal(size=(32, 16, 6, 6)))
    xl = np.ascontiguousarray(rng.normal(size=(32, 8, 28, 28)))
    gl = np.ascontiguousarray(rng.normal(size=(32, 16, 26, 26)))
    pool_in = np.ascontiguousarray(rng.normal(size=(32, 16, 8, 8)))
    _, idx = kernels.maxpool2_forward(pool_in)
    pool_go = np.ascontiguousarray(rng.normal(size=(32, 16, 4, 4)))
    return {
        "conv2d forward 8x8": lambda: kernels.conv2d_forward(xs, ws),
        "conv2d backward input 8x8": lambda: kernels.conv2d_backward_input(gs, ws, 8, 8),
        "conv2d backward weight 8x8": lambda: kernels.conv2d_backward_weight(xs, gs, 3, 3),
        "conv2d forward 28x28": lambda: kernels.conv2d_forward(xl, ws),
        "conv2d backward input 28x28": lambda: kernels.conv2d_backward_input(gl, ws, 28, 28),
        "maxpool2 forward": lambda: kernels.maxpool2_forward(pool_in),
        "maxpool2 backward": lambda: kernels.maxpool2_backward(pool_go, idx, 8, 8),
    }


def end_to_end_cases(rng):
    layers = [la.Conv2d(1, 8, 3, 3, "same"), la.ReLU(), la.MaxPool2(),
              la.Conv2d(8, 16, 3, 3, "same"), la.ReLU(), la.MaxPool2(),
              la.Flatten(), la.Dense(64, 10)]
    model = la.build_model((1, 8, 8), layers, seed=0)
    x = rng.random((1, 8, 8))
    ranking = la.rank_dimensions(rng.normal(size=64))
    return {
        "local attribution (N=20, k=9)":
            lambda: la.local_attribution(model, x, 0, n_iter=20, k_targets=9),
        "insertion curve (101 points)":
            lambda: la.insertion_curve(model, x, ranking, n_points=101),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    cases.update(end_to_end_cases(rng))

    backends = ["python"]
    try:
        kernels.set_backend("cython")
        backends.append("cython")
    except ImportError:
        print("compiled extension not available; timing the fallback only")

    results = {}
    for backend in backends:
        kernels.set_backend(backend)
        for name, fn in cases.items():
            results[(name, backend)] = time_call(fn, args.repeats)

    width = max(len(n) for n in cases)
    header = f"{'case':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name in cases:
        row = f"{name:<{width}}  "
        for backend in backends:
            row += f"{results[(name, backend)] * 1e3:>10.2f}ms"
        if len(backends) == 2:
            ratio = results[(name, "python")] / results[(name, "cython")]
            row += f"{ratio:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
