"""Time the convolution kernels on both backends.

Runs the three index patterns (gather, scatter, weight gradient) over the
tensor shapes the convolutional encoder-decoder actually produces, once with
the compiled numba kernels and once with the plain numpy einsum path, and
prints a table with the ratio. The first numba call of each shape is a
warmup so JIT compilation does not count against it.

Usage:
    python3 benchmarks/bench_kernels.py [--batch 32] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from maskpf.nn import kernels
from maskpf.nn.kernels import (
    HAS_NUMBA,
    conv2d,
    conv2d_grad_input,
    conv2d_grad_weights,
    set_backend,
)

# (in_channels, out_channels, height, width) per encoder stage, stride (1,2)
STAGES = [
    (1, 16, 6, 205),
    (16, 32, 5, 102),
    (32, 64, 4, 50),
    (64, 128, 3, 24),
]
KERNEL_HW = (2, 3)
STRIDE = (1, 2)


def bench_one(fn, repeats: int) -> float:
    fn()
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def stage_ops(rng, batch: int, stage) -> list[tuple[str, callable]]:
    cin, cout, h, w = stage
    x = rng.standard_normal((batch, cin, h, w))
    wt = rng.standard_normal((cout, cin, *KERNEL_HW))
    y = conv2d(x, wt, STRIDE)
    gy = rng.standard_normal(y.shape)
    name = f"{cin:>3}x{h}x{w}"
    return [
        (f"conv    {name}", lambda: conv2d(x, wt, STRIDE)),
        (f"grad_in {name}", lambda: conv2d_grad_input(gy, wt, STRIDE, (h, w))),
        (f"grad_w  {name}", lambda: conv2d_grad_weights(x, gy, STRIDE, KERNEL_HW)),
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    ops = []
    for stage in STAGES:
        ops.extend(stage_ops(rng, args.batch, stage))

    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    if not HAS_NUMBA:
        print("numba is not importable; timing the numpy path only")
    times = {}
    for backend in backends:
        set_backend(backend)
        times[backend] = [bench_one(fn, args.repeats) for _, fn in ops]
    set_backend(None)

    header = f"{'operation':<22} " + " ".join(f"{b + ' (ms)':>12}" for b in backends)
    if len(backends) == 2:
        header += f" {'speedup':>9}"
    print(header)
    print("-" * len(header))
    totals = {b: 0.0 for b in backends}
    for i, (label, _) in enumerate(ops):
        cells = []
        for b in backends:
            totals[b] += times[b][i]
            cells.append(f"{times[b][i] * 1e3:12.3f}")
        line = f"{label:<22} " + " ".join(cells)
        if len(backends) == 2:
            line += f" {times['numpy'][i] / times['numba'][i]:8.2f}x"
        print(line)
    footer = f"{'total':<22} " + " ".join(f"{totals[b] * 1e3:12.3f}" for b in backends)
    if len(backends) == 2:
        footer += f" {totals['numpy'] / totals['numba']:8.2f}x"
    print(footer)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
