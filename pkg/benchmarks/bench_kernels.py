"""Forward/backward kernel benchmark: compiled loops versus vectorised numpy.

Runs both backends on the same random inputs at a few batch/width shapes
and prints a table of median step times plus the speedup. The compiled
backend is warmed up first so compilation time never lands in a sample.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats 30]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fairphq import kernels_numpy
from fairphq.core import N_CLASSES, N_TASKS

try:
    from fairphq import kernels_numba
except ImportError:
    kernels_numba = None

SHAPES = [
    # (batch, feature dim, hidden dim)
    (32, 20, 32),
    (128, 20, 32),
    (512, 64, 64),
]


def make_inputs(rng, batch, dim, hidden):
    xs = [rng.standard_normal((batch, dim)) for _ in range(3)]
    ws = [rng.standard_normal((hidden, dim)) / np.sqrt(dim) for _ in range(3)]
    bs = [rng.standard_normal(hidden) * 0.1 for _ in range(3)]
    attn_q = rng.standard_normal((N_TASKS, hidden))
    head_w = rng.standard_normal((N_TASKS, N_CLASSES, hidden)) / np.sqrt(hidden)
    head_b = rng.standard_normal((N_TASKS, N_CLASSES)) * 0.1
    dlogits = rng.standard_normal((batch, N_TASKS, N_CLASSES)) / batch
    return xs, ws, bs, attn_q, head_w, head_b, dlogits


def one_step(kernels, inputs):
    xs, ws, bs, attn_q, head_w, head_b, dlogits = inputs
    emb, alpha, fused, q = kernels.forward(
        xs[0], xs[1], xs[2], ws[0], bs[0], ws[1], bs[1], ws[2], bs[2],
        attn_q, head_w, head_b,
    )
    grads = kernels.backward(
        xs[0], xs[1], xs[2], ws[0], ws[1], ws[2], attn_q, head_w,
        emb, alpha, fused, dlogits,
    )
    return q, grads


def median_time(kernels, inputs, repeats):
    one_step(kernels, inputs)  # warmup (and JIT compile for the numba path)
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        one_step(kernels, inputs)
        samples.append(time.perf_counter() - start)
    return float(np.median(samples))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30, help="timed runs per shape")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    backends = [("numpy", kernels_numpy)]
    if kernels_numba is not None:
        backends.append(("numba", kernels_numba))
    else:
        print("numba not installed; benchmarking the numpy backend only")

    header = f"{'batch':>6} {'dim':>4} {'hidden':>6}"
    for name, _ in backends:
        header += f" {name + ' ms':>10}"
    if len(backends) == 2:
        header += f" {'speedup':>8}"
    print(header)
    print("-" * len(header))

    for batch, dim, hidden in SHAPES:
        inputs = make_inputs(rng, batch, dim, hidden)
        times = [median_time(kernels, inputs, args.repeats) for _, kernels in backends]
        row = f"{batch:>6} {dim:>4} {hidden:>6}"
        for t in times:
            row += f" {t * 1e3:>10.3f}"
        if len(times) == 2:
            row += f" {times[0] / times[1]:>7.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
