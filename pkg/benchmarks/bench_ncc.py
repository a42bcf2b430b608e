"""Compare the compiled NCC kernel against the pure-numpy fallback.

Runs the full-map search for a few window/template sizes typical of the
tracker (150x150 windows, padded cell templates) and prints per-call times
plus the agreement between the two backends.

Usage: python benchmarks/bench_ncc.py [repeats]
"""

import sys
import time

import numpy as np

from celllineage import kernels
from celllineage.kernels import ncc_numpy

try:
    from celllineage.kernels import _nccfast
except ImportError:
    _nccfast = None


CASES = [
    ("small cell", (150, 150), (18, 18)),
    ("large cell", (150, 150), (30, 30)),
    ("clipped window", (90, 150), (24, 24)),
    ("tiny template", (150, 150), (6, 6)),
]


def time_backend(fn, window, template, repeats):
    fn(window, template)  # warm-up
    start = time.perf_counter()
    for _ in range(repeats):
        out = fn(window, template)
    return (time.perf_counter() - start) / repeats, out


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    rng = np.random.default_rng(0)
    print("active backend: %s" % kernels.BACKEND)
    if _nccfast is None:
        print("compiled kernel unavailable; benchmarking the numpy fallback only")
    header = "%-16s %10s %12s %12s %8s %12s" % (
        "case", "window", "numpy (ms)", "cython (ms)", "speedup", "max |diff|"
    )
    print(header)
    print("-" * len(header))
    for name, wshape, tshape in CASES:
        window = rng.random(wshape)
        template = rng.random(tshape)
        t_np, out_np = time_backend(ncc_numpy.ncc_map, window, template, repeats)
        if _nccfast is not None:
            t_cy, out_cy = time_backend(_nccfast.ncc_map, window, template, repeats)
            diff = float(np.abs(out_np - out_cy).max())
            print(
                "%-16s %10s %12.3f %12.3f %7.1fx %12.2e"
                % (name, "%dx%d" % wshape, 1e3 * t_np, 1e3 * t_cy, t_np / t_cy, diff)
            )
        else:
            print("%-16s %10s %12.3f %12s %8s %12s" % (name, "%dx%d" % wshape, 1e3 * t_np, "-", "-", "-"))


if __name__ == "__main__":
    main()
