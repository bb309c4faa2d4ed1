"""Timing comparison of the compiled sampling kernels vs the numpy
reference implementations.

Run:  python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly so the comparison does not depend
on which one the package selected at import time.
"""

import argparse
import time

import numpy as np

from bevseg.kernels import BACKEND, numpy_ref

try:
    from bevseg.kernels import _core
except ImportError:
    _core = None


def bench(fn, args, repeat):
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def make_case(rng, n_points, heads, k, channels, h, w):
    feat = rng.standard_normal((channels, h, w)).astype(np.float32)
    value = rng.standard_normal((heads, channels, h, w)).astype(np.float32)
    xy = (rng.random((n_points, 2)) * [w + 2, h + 2] - 1).astype(np.float32)
    loc = (rng.random((n_points, heads, k, 2)) * [w + 2, h + 2] - 1) \
        .astype(np.float32)
    wts = rng.random((n_points, heads, k)).astype(np.float32)
    grad_g = rng.standard_normal((n_points, channels)).astype(np.float32)
    grad_d = rng.standard_normal((n_points, heads, channels)).astype(np.float32)
    return feat, value, xy, loc, wts, grad_g, grad_d


CASES = [
    ("desk  800q 2h 4k 64c 4x7 map", (800, 2, 4, 64, 4, 7)),
    ("surround 5000q 8h 16k 32c 14x25 map", (5000, 8, 16, 32, 14, 25)),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(7)

    print(f"active backend: {BACKEND}")
    if _core is None:
        print("compiled kernels unavailable; timing numpy reference only")
    backends = [("numpy", numpy_ref)] + ([("cython", _core)] if _core else [])

    rows = []
    for label, shape in CASES:
        feat, value, xy, loc, wts, grad_g, grad_d = make_case(rng, *shape)
        for name, mod in backends:
            t_g = bench(mod.gather_bilinear, (feat, xy), args.repeat)
            t_gb = bench(mod.gather_bilinear_backward,
                         (feat, xy, grad_g), args.repeat)
            t_d = bench(mod.deform_agg, (value, loc, wts), args.repeat)
            t_db = bench(mod.deform_agg_backward,
                         (value, loc, wts, grad_d), args.repeat)
            rows.append((label, name, t_g, t_gb, t_d, t_db))

    print(f"{'case':36s} {'backend':8s} {'gather':>10s} {'gather_bw':>10s} "
          f"{'deform':>10s} {'deform_bw':>10s}")
    for label, name, t_g, t_gb, t_d, t_db in rows:
        print(f"{label:36s} {name:8s} {t_g * 1e3:9.3f}ms {t_gb * 1e3:9.3f}ms "
              f"{t_d * 1e3:9.3f}ms {t_db * 1e3:9.3f}ms")

    if _core is not None:
        for label, _ in CASES:
            sub = [r for r in rows if r[0] == label]
            np_row = next(r for r in sub if r[1] == "numpy")
            cy_row = next(r for r in sub if r[1] == "cython")
            speed = [n / c for n, c in zip(np_row[2:], cy_row[2:])]
            print(f"{label}: cython speedup "
                  + " ".join(f"{s:.1f}x" for s in speed))


if __name__ == "__main__":
    main()
