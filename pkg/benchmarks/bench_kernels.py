"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--n 720] [--repeat 50]

Both backends are imported directly, so the environment flag that disables
numba for the package does not matter here.
"""

import argparse
import timeit

import numpy as np

from attn_pricer import kernels
from attn_pricer.core import InterestHistory
from attn_pricer.sim import simulate_interest


def cases(n):
    rng = np.random.default_rng(0)
    y, _ = simulate_interest(30.0, 15.0, 0.6, InterestHistory.constant(14.0, 0.0), n, 1 / 360, rng)
    proxy, m = simulate_interest(30.0, 15.0, 0.6, InterestHistory.constant(14.0, 18 / 360), n, 1 / 360, rng)
    returns = 0.2 * np.sqrt(proxy[m:-1] / 360) * rng.standard_normal(n)
    nu = rng.uniform(0.0, 80.0, 2000)
    z = rng.uniform(0.1, 5000.0, 2000)
    return {
        "cir_loglik": lambda impl: impl.cir_loglik(y, 30.0, 15.0, 0.6, 1 / 360),
        "lag_scan": lambda impl: impl.lag_scan(returns, proxy, m, 1 / 360),
        "log_iv x2000": lambda impl: [impl.log_iv(a, b) for a, b in zip(nu, z)] if impl is kernels.numba_impl
        else impl.log_iv(nu, z),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=720, help="series length")
    ap.add_argument("--repeat", type=int, default=50, help="timed calls per kernel")
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        print("numba disabled or unavailable; timing the numpy backend only")
    print(f"{'kernel':<16}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, fn in cases(args.n).items():
        row = {}
        for label, impl in (("numba", kernels.numba_impl), ("numpy", kernels.numpy_impl)):
            if label == "numba" and not kernels.HAVE_NUMBA:
                continue
            fn(impl)  # compile / warm up
            row[label] = 1e3 * timeit.timeit(lambda: fn(impl), number=args.repeat) / args.repeat
        nb = row.get("numba", float("nan"))
        print(f"{name:<16}{nb:>12.3f}{row['numpy']:>12.3f}{row['numpy'] / nb:>10.1f}")


if __name__ == "__main__":
    main()
