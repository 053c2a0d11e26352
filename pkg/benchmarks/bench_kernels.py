#!/usr/bin/env python3
"""Timing comparison of the kernel backends (compiled vs numpy).

Runs the four hot kernels — conv3x3 forward/backward and maxpool2x2
forward/backward — on a representative mid-network feature map with
every backend importable in this environment, checks that the backends
agree numerically, and prints best-of-N timings with the speedup of the
compiled extension over the numpy fallback.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --batch 10 --channels 128 --repeats 7
"""

import argparse
import time

import numpy as np

from wordspot.nn import kernels


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def make_cases(args):
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((args.batch, args.channels, args.height, args.width))
    w = rng.standard_normal((args.channels, args.channels, 3, 3)) * 0.05
    b = rng.standard_normal(args.channels) * 0.05
    grad = rng.standard_normal(x.shape[:1] + (args.channels,) + x.shape[2:])
    pool_grad = rng.standard_normal((args.batch, args.channels,
                                     args.height // 2, args.width // 2))

    def cases(backend):
        out, argmax = backend.maxpool2x2_forward(x)
        return {
            "conv3x3 forward": lambda: backend.conv3x3_forward(x, w, b),
            "conv3x3 backward": lambda: backend.conv3x3_backward(x, w, grad),
            "maxpool2x2 forward": lambda: backend.maxpool2x2_forward(x),
            "maxpool2x2 backward": lambda: backend.maxpool2x2_backward(
                x.shape, argmax, pool_grad),
        }

    return cases


def check_parity(backends, cases_for):
    """Max |difference| between backends across all kernel outputs."""
    outputs = {}
    for name, backend in backends.items():
        run = cases_for(backend)
        flat = []
        for kernel in sorted(run):
            result = run[kernel]()
            parts = result if isinstance(result, tuple) else (result,)
            flat.extend(np.asarray(p, dtype=np.float64).ravel() for p in parts)
        outputs[name] = np.concatenate(flat)
    names = sorted(outputs)
    worst = 0.0
    for a, b in zip(names, names[1:]):
        worst = max(worst, float(np.max(np.abs(outputs[a] - outputs[b]))))
    return worst


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=10)
    parser.add_argument("--channels", type=int, default=64)
    parser.add_argument("--height", type=int, default=32)
    parser.add_argument("--width", type=int, default=96)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = {name: kernels.get_backend(name)
                for name in kernels.available_backends()}
    print("backends: %s (active default: %s)"
          % (", ".join(backends), kernels.BACKEND))
    print("shape: batch=%d channels=%d map=%dx%d, best of %d runs"
          % (args.batch, args.channels, args.height, args.width, args.repeats))

    cases_for = make_cases(args)
    if len(backends) > 1:
        worst = check_parity(backends, cases_for)
        print("backend parity: max |difference| = %.3e" % worst)

    timings = {}
    for name, backend in backends.items():
        run = cases_for(backend)
        timings[name] = {kernel: best_of(fn, args.repeats)
                         for kernel, fn in run.items()}

    kernels_order = ["conv3x3 forward", "conv3x3 backward",
                     "maxpool2x2 forward", "maxpool2x2 backward"]
    header = "%-22s" % "kernel" + "".join("%14s" % n for n in backends)
    if "python" in timings and "cython" in timings:
        header += "%12s" % "speedup"
    print()
    print(header)
    print("-" * len(header))
    for kernel in kernels_order:
        row = "%-22s" % kernel
        for name in backends:
            row += "%12.2f ms" % (timings[name][kernel] * 1e3)
        if "python" in timings and "cython" in timings:
            row += "%11.1fx" % (timings["python"][kernel]
                                / timings["cython"][kernel])
        print(row)


if __name__ == "__main__":
    main()
