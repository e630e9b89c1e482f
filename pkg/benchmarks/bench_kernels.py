"""Compiled kernels against the pure-Python fallback on the same inputs.

Usage: python benchmarks/bench_kernels.py [--degrees 1024 4096] [--repeat 5]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from dpagg import _pyring, params
from dpagg._limbs import Modulus, ntt_tables, to_limbs

try:
    from dpagg import _ringcore
except ImportError:
    _ringcore = None


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(degree: int, q: int, repeat: int) -> list[tuple[str, float, float | None]]:
    rng = np.random.default_rng(degree)
    mod = Modulus(q)
    a = to_limbs([int(x) % q for x in rng.integers(0, 1 << 62, degree)])
    b = to_limbs([int(x) % q for x in rng.integers(0, 1 << 62, degree)])
    tables = ntt_tables(degree, q)
    point = 123456789 % q
    ops = {
        "add": lambda k: k.add(a, b, mod),
        "evaluate": lambda k: k.evaluate(a, point, mod),
        "ring_mul": lambda k: k.negacyclic_mul(a, b, mod, tables if k is _ringcore else True),
    }
    rows = []
    for name, op in ops.items():
        t_py, ref = _best(lambda: op(_pyring), max(1, repeat // 2))
        t_c = None
        if _ringcore is not None:
            t_c, got = _best(lambda: op(_ringcore), repeat)
            if not np.array_equal(np.asarray(got), np.asarray(ref)):
                raise SystemExit(f"{name}: backends disagree at N={degree}")
        rows.append((name, t_py, t_c))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degrees", type=int, nargs="+", default=[1024, 4096])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'N':>6} {'op':<10} {'python ms':>11} {'compiled ms':>12} {'speedup':>8}")
    for n in args.degrees:
        for name, t_py, t_c in bench(n, params.Q120, args.repeat):
            if t_c is None:
                print(f"{n:>6} {name:<10} {t_py * 1e3:>11.3f} {'n/a':>12} {'':>8}")
            else:
                print(f"{n:>6} {name:<10} {t_py * 1e3:>11.3f} {t_c * 1e3:>12.3f} {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
