"""Time every kernel under each available backend.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from powerlens._kernels import available_backends


def cases(rng):
    n = 4096
    x = np.sort(rng.uniform(size=n))
    y = rng.normal(size=n)
    tol = 1e-12 * float(y @ y)
    counters = [rng.integers(0, 10**6, 100_000).astype(np.float64) for _ in range(4)]
    t = np.cumsum(rng.uniform(0.5, 1.5, 20_000))
    e = np.cumsum(rng.uniform(0, 3, 20_000))
    p = rng.uniform(0, 5, 20_000)
    q = rng.uniform(t[0], t[-1], 20_000)
    return {
        "best_split (n=4096)": lambda k: k.best_split(x, y, 3, tol),
        "cpu_load_batch (1e5 cores)": lambda k: k.cpu_load_batch(*counters),
        "antiderivative cumulative (2e4)": lambda k: k.antiderivative(t, e, True, q),
        "antiderivative power (2e4)": lambda k: k.antiderivative(t, p, False, q),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    rng = np.random.default_rng(0)
    names = sorted(backends)
    print(f"{'kernel':34s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases(rng).items():
        best = {}
        for name in names:
            kernel = backends[name]
            best[name] = min(timeit.repeat(lambda: fn(kernel), number=1, repeat=args.repeat))
        row = f"{label:34s}" + "".join(f"{best[n] * 1e3:10.2f}ms" for n in names)
        if "cython" in best:
            row += f"{best['python'] / best['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
