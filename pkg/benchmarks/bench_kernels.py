"""Time the numba and numpy kernel backends on the three hot loops.

Run ``python3 benchmarks/bench_kernels.py``; ``--repeat`` and ``--size``
scale the workload. Each kernel is called once before timing so numba's
compile cost is excluded (it is reported separately).
"""

import argparse
import logging
import time
import timeit

import numpy as np

from polyembed import _backend
from polyembed.geometry import regular_polygon
from polyembed.solver import MFSSolver, far_field_weights

logging.basicConfig(level=logging.INFO, format="%(message)s")
log = logging.getLogger("bench")


def _workloads(size: int):
    rng = np.random.default_rng(0)
    x = np.geomspace(1e-3, 50.0, 200 * size)
    ys = rng.normal(size=(50 * size, 2))
    n0 = rng.integers(-3, 4, ys.shape[0])
    sols = MFSSolver(regular_polygon(4), 1.0).solve_plane_waves(np.linspace(0, 6, 8))
    fw = far_field_weights(sols.source_points, sols.orders, sols.coefficients, 1.0, 12)
    th = rng.uniform(0, 2 * np.pi, 500 * size)
    return {
        "jy_table": lambda m: m.jy_table(60, x),
        "h_table": lambda m: m.h_table(1.0, ys, n0, 12),
        "ff_sum": lambda m: m.ff_sum(th, 1.0, fw.centers, fw.lo, fw.hi, fw.W),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=1, help="workload multiplier")
    args = ap.parse_args(argv)

    mods = {name: _backend.get(name) for name in ("numba", "numpy")}
    log.info("%-10s %12s %12s %9s %12s", "kernel", "numba [ms]", "numpy [ms]", "speedup", "jit [s]")
    for name, call in _workloads(args.size).items():
        t0 = time.perf_counter()
        call(mods["numba"])  # compile
        jit = time.perf_counter() - t0
        call(mods["numpy"])
        best = {
            b: min(timeit.repeat(lambda m=m: call(m), number=1, repeat=args.repeat)) * 1e3
            for b, m in mods.items()
        }
        log.info("%-10s %12.2f %12.2f %8.1fx %12.2f", name, best["numba"], best["numpy"],
                 best["numpy"] / best["numba"], jit)


if __name__ == "__main__":
    main()
