"""Vectors over Z_q with a compiled kernel backend and a pure-Python fallback.

The backend is chosen once at import.  Set ``DPAGG_PURE_PYTHON=1`` to force
the fallback (the benchmark and the cross-backend tests do this in a
subprocess).
"""
from __future__ import annotations

import os

import numpy as np

from . import _pyring
from ._limbs import (MASK64, MAX_MODULUS_BITS, Modulus, NttTables, from_limbs, ntt_tables,
                     small_to_limbs, to_limbs)

if os.environ.get("DPAGG_PURE_PYTHON"):
    kernels = _pyring
else:
    try:
        from . import _ringcore as kernels
    except ImportError:  # extension not built
        kernels = _pyring

BACKEND: str = kernels.BACKEND

__all__ = [
    "BACKEND", "MASK64", "MAX_MODULUS_BITS", "Modulus", "NttTables", "kernels", "from_limbs",
    "ntt_tables", "small_to_limbs", "to_limbs", "zeros", "add", "sub", "scale", "dot",
    "evaluate", "negacyclic_mul", "sum_rows", "mul_pointwise", "centered",
]


def zeros(n: int) -> np.ndarray:
    return np.zeros((n, 2), dtype=np.uint64)


def add(a: np.ndarray, b: np.ndarray, mod: Modulus) -> np.ndarray:
    return kernels.add(a, b, mod)


def sum_rows(rows, mod: Modulus) -> np.ndarray:
    """Sum of many limb vectors with a single reduction at the end.

    Each 128-bit coefficient is split into four 32-bit parts so up to 2^32
    rows can be accumulated in uint64 without overflow.
    """
    stack = np.asarray(rows, dtype=np.uint64)
    if stack.shape[0] >= 1 << 32:
        raise ValueError("too many rows")
    m32 = np.uint64(0xFFFFFFFF)
    lo, hi = stack[..., 0], stack[..., 1]
    parts = [(lo & m32).sum(axis=0), (lo >> np.uint64(32)).sum(axis=0),
             (hi & m32).sum(axis=0), (hi >> np.uint64(32)).sum(axis=0)]
    q = mod.q
    total = [(int(a) + (int(b) << 32) + (int(c) << 64) + (int(d) << 96)) % q
             for a, b, c, d in zip(*(p.tolist() for p in parts))]
    return to_limbs(total)


def sub(a: np.ndarray, b: np.ndarray, mod: Modulus) -> np.ndarray:
    return kernels.sub(a, b, mod)


def scale(a: np.ndarray, k: int, mod: Modulus) -> np.ndarray:
    return kernels.scale(a, k, mod)


def mul_pointwise(a: np.ndarray, b: np.ndarray, mod: Modulus) -> np.ndarray:
    return kernels.mul_pointwise(a, b, mod)


def dot(a: np.ndarray, b: np.ndarray, mod: Modulus) -> int:
    return kernels.dot(a, b, mod)


def evaluate(a: np.ndarray, x: int, mod: Modulus) -> int:
    return kernels.evaluate(a, x, mod)


def negacyclic_mul(a: np.ndarray, b: np.ndarray, mod: Modulus, fast: bool = True) -> np.ndarray:
    """Product in Z_q[X]/(X^n + 1).

    ``fast`` selects the transform path (NTT in the compiled backend,
    Kronecker substitution in the fallback) when the modulus supports it;
    otherwise schoolbook convolution is used.
    """
    tables = None
    if fast:
        n = a.shape[0]
        tables = ntt_tables(n, mod.q)
        if tables is None and kernels is _pyring and n > 1:
            tables = True  # Kronecker needs no tables
    return kernels.negacyclic_mul(a, b, mod, tables)


def centered(values: list[int], q: int) -> list[int]:
    """Representatives in [-q/2, q/2)."""
    half = q // 2
    return [v - q if v > half else v for v in values]
