"""Compare the compiled and pure-numpy conv2d backends.

Times forward and backward passes on the shapes the training networks
actually use.  Run: python3 benchmarks/bench_conv.py [--repeat N]
"""

import argparse
import importlib
import time

import numpy as np

SHAPES = [
    # (label, batch, cin, cout, H, k, stride, pad)
    ("d-block1-in", 9, 1, 128, 16, 3, 1, 1),
    ("d-block1", 9, 128, 128, 16, 3, 1, 1),
    ("d-block2", 9, 128, 128, 8, 3, 1, 1),
    ("d-block3", 9, 128, 128, 4, 3, 1, 1),
    ("g-block", 8, 64, 64, 16, 3, 1, 1),
    ("g-out", 8, 64, 1, 16, 3, 1, 1),
    ("shortcut-1x1", 9, 128, 128, 8, 1, 1, 0),
]


def load_backends():
    backends = []
    try:
        backends.append(importlib.import_module("ssdgan._convkernels"))
    except ImportError:
        print("compiled backend not built; benchmarking numpy only")
    backends.append(importlib.import_module("ssdgan._conv_numpy"))
    return backends


def bench(backend, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for label, b, cin, cout, h, k, stride, pad in SHAPES:
        x = rng.standard_normal((b, cin, h, h)).astype(np.float32)
        w = rng.standard_normal((cout, cin, k, k)).astype(np.float32)
        bias = np.zeros(cout, dtype=np.float32)
        y, cols = backend.conv2d_forward(x, w, bias, stride, pad)
        gy = rng.standard_normal(y.shape).astype(np.float32)
        t0 = time.perf_counter()
        for _ in range(repeat):
            backend.conv2d_forward(x, w, bias, stride, pad)
        fwd = (time.perf_counter() - t0) / repeat
        t0 = time.perf_counter()
        for _ in range(repeat):
            backend.conv2d_backward(x, w, gy, stride, pad, cols, True)
        bwd = (time.perf_counter() - t0) / repeat
        rows.append((label, fwd, bwd))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=50)
    args = parser.parse_args()
    results = {}
    for backend in load_backends():
        results[backend.NAME] = bench(backend, args.repeat)
    names = list(results)
    print("%-14s" % "shape" + "".join("  %12s-fwd %12s-bwd" % (n, n) for n in names))
    for i, (label, *_rest) in enumerate(results[names[0]]):
        cells = ""
        for n in names:
            _, fwd, bwd = results[n][i]
            cells += "  %13.3fms %13.3fms" % (fwd * 1e3, bwd * 1e3)
        print("%-14s%s" % (label, cells))
    if len(names) == 2:
        tot = {n: sum(f + b for _, f, b in results[n]) for n in names}
        print(
            "total %s %.3fms vs %s %.3fms (speedup %.2fx)"
            % (names[0], tot[names[0]] * 1e3, names[1], tot[names[1]] * 1e3, tot[names[1]] / tot[names[0]])
        )


if __name__ == "__main__":
    main()
