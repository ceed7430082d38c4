"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 10000,100000,1000000] [--repeat 5]

Reports the best-of-N wall time per kernel and size, plus a subset-fit loop
shaped like the convergence analysis. JIT compilation is excluded by a
warm-up call.
"""
import argparse
import time

import numpy as np

from lorapl import _accel


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, rng):
    lat1 = rng.uniform(50.6, 50.8, n)
    lon1 = rng.uniform(7.0, 7.2, n)
    lat2 = np.full(n, 50.7374)
    lon2 = np.full(n, 7.0982)
    d = np.exp(rng.uniform(np.log(50), np.log(13_000), n))
    pl = 130 + 20 * np.log10(d / 1000) + rng.normal(0, 8, n)
    keys, counts, s_pl, s_ld = _accel.numpy_kernels.bin_reduce(d, pl, 10.0)
    x = 10 * (s_ld / counts - 3.0)
    y = s_pl / counts
    w = np.ones_like(x)

    def subset_fits(k):
        def go():
            for seed in range(20):
                idx = np.random.default_rng(seed).choice(n, size=min(k, n), replace=False)
                kk, cc, sp, sl = k_.bin_reduce(d[idx], pl[idx], 10.0)
                k_.line_fit(10 * (sl / cc - 3.0), sp / cc, np.ones(cc.size))
        return go

    return {
        "haversine": lambda: k_.haversine(lat1, lon1, lat2, lon2),
        "bin_reduce": lambda: k_.bin_reduce(d, pl, 10.0),
        "line_fit(bins)": lambda: k_.line_fit(x, y, w),
        "sum_squares": lambda: k_.sum_squares(pl),
        "20 subset fits": subset_fits(max(2, n // 10)),
    }


def main():
    global k_
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="10000,100000,1000000")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    backends = [_accel.numpy_kernels] + ([_accel.numba_kernels] if _accel.numba_kernels else [])
    if len(backends) == 1:
        print("numba not importable; timing numpy only")

    print(f"{'kernel':<16}{'n':>10}" + "".join(f"{b.name + ' ms':>14}" for b in backends) + f"{'speedup':>10}")
    for n in sizes:
        rng = np.random.default_rng(0)
        timings = {}
        for b in backends:
            k_ = b
            fns = cases(n, rng)
            for name, fn in fns.items():
                fn()  # warm-up / JIT
                timings.setdefault(name, []).append(best_of(fn, args.repeat) * 1e3)
            rng = np.random.default_rng(0)
        for name, ts in timings.items():
            speed = f"{ts[0] / ts[1]:>9.2f}x" if len(ts) == 2 else ""
            print(f"{name:<16}{n:>10}" + "".join(f"{t:>14.3f}" for t in ts) + speed)


k_ = _accel.numpy_kernels

if __name__ == "__main__":
    main()
