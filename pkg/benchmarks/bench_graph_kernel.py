#!/usr/bin/env python3
"""Benchmark: compiled graph kernel vs. the pure-Python twin.

Measures the exhaustive identifiability sweep (every ascending-edge DAG on
n nodes with every role placement) and a single-configuration verdict
microbenchmark.  Both paths compute identical results; the compiled core
only buys speed.

Usage: python benchmarks/bench_graph_kernel.py [--max-nodes N]
"""

from __future__ import annotations

import argparse
import time

from causalbias.graph_kernel import (
    HAS_COMPILED_KERNEL,
    python_enumerate_equivalence,
    python_verdict_pair,
)

if HAS_COMPILED_KERNEL:
    from causalbias import _graphcore


def time_call(fn, *args, repeat: int = 1):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--max-nodes", type=int, default=5)
    args = parser.parse_args()

    print(f"compiled kernel available: {HAS_COMPILED_KERNEL}")
    print(f"{'n':>3} {'configs':>9} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for n in range(2, args.max_nodes + 1):
        t_py, (configs, bad_py, _) = time_call(python_enumerate_equivalence, n)
        assert bad_py == 0
        if HAS_COMPILED_KERNEL:
            t_c, (configs_c, bad_c, _) = time_call(_graphcore.enumerate_equivalence, n)
            assert (configs_c, bad_c) == (configs, 0)
            print(f"{n:>3} {configs:>9} {t_py:>9.3f}s {t_c:>9.3f}s {t_py / t_c:>7.1f}x")
        else:
            print(f"{n:>3} {configs:>9} {t_py:>9.3f}s {'-':>10} {'-':>8}")

    # single-verdict microbenchmark on a dense 5-node configuration
    pa = [0, 1, 3, 5, 11]
    reps = 20_000
    t0 = time.perf_counter()
    for _ in range(reps):
        python_verdict_pair(5, pa, 1, 4, 0b00101)
    t_py = (time.perf_counter() - t0) / reps
    line = f"verdict_pair: python {t_py * 1e6:.1f} us"
    if HAS_COMPILED_KERNEL:
        t0 = time.perf_counter()
        for _ in range(reps):
            _graphcore.verdict_pair(5, pa, 1, 4, 0b00101)
        t_c = (time.perf_counter() - t0) / reps
        line += f", compiled {t_c * 1e6:.1f} us ({t_py / t_c:.1f}x)"
    print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
