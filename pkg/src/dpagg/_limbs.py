"""Limb layout shared by the compiled and pure-Python kernels.

A vector over Z_q is a C-contiguous ``(n, 2)`` uint64 array of
little-endian (lo, hi) limbs.  ``arr.tobytes()`` is therefore exactly the
16-byte little-endian coefficient encoding.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MASK64 = (1 << 64) - 1
MAX_MODULUS_BITS = 127


def to_limbs(values) -> np.ndarray:
    """Pack non-negative ints (< 2^128) into an ``(n, 2)`` uint64 array."""
    values = list(values)
    out = np.empty((len(values), 2), dtype=np.uint64)
    if values:
        out[:, 0] = [v & MASK64 for v in values]
        out[:, 1] = [v >> 64 for v in values]
    return out


def from_limbs(arr: np.ndarray) -> list[int]:
    lo = arr[:, 0].tolist()
    hi = arr[:, 1].tolist()
    return [l | (h << 64) for l, h in zip(lo, hi)]


def small_to_limbs(values: np.ndarray, q: int) -> np.ndarray:
    """Map small signed integers (|v| < 2^63) to residues mod q."""
    v = np.asarray(values, dtype=np.int64)
    out = np.zeros((v.shape[0], 2), dtype=np.uint64)
    pos = v >= 0
    out[pos, 0] = v[pos].astype(np.uint64)
    neg = ~pos
    if neg.any():
        mag = (-v[neg]).astype(np.uint64)
        q_lo = np.uint64(q & MASK64)
        q_hi = np.uint64(q >> 64)
        lo = q_lo - mag
        borrow = (mag > q_lo).astype(np.uint64)
        out[neg, 0] = lo
        out[neg, 1] = q_hi - borrow
    return out


@dataclass(frozen=True)
class Modulus:
    """Montgomery constants for an odd modulus q < 2^127."""

    q: int
    qneg: int = field(init=False, repr=False)
    r2: int = field(init=False, repr=False)

    def __post_init__(self):
        if self.q < 3 or self.q % 2 == 0 or self.q.bit_length() > MAX_MODULUS_BITS:
            raise ValueError(f"modulus must be odd and below 2^{MAX_MODULUS_BITS}: {self.q}")
        r = 1 << 128
        object.__setattr__(self, "qneg", (-pow(self.q, -1, r)) % r)
        object.__setattr__(self, "r2", pow(2, 256, self.q))


@dataclass(frozen=True)
class NttTables:
    psi_rev: np.ndarray
    ipsi_rev: np.ndarray
    n_scale: int
    psi: int


def _bitrev(i: int, bits: int) -> int:
    return int(format(i, f"0{bits}b")[::-1], 2) if bits else 0


def _primitive_2n_root(n: int, q: int) -> int:
    exp = (q - 1) // (2 * n)
    for h in range(2, 10_000):
        psi = pow(h, exp, q)
        if pow(psi, n, q) == q - 1:
            return psi
    raise ValueError("no primitive 2n-th root found")


@lru_cache(maxsize=32)
def ntt_tables(n: int, q: int) -> NttTables | None:
    """Twiddle tables for the negacyclic NTT, or None when q != 1 mod 2n."""
    if n < 2 or n & (n - 1) or (q - 1) % (2 * n):
        return None
    psi = _primitive_2n_root(n, q)
    psi_inv = pow(psi, -1, q)
    bits = n.bit_length() - 1
    r = 1 << 128
    psi_rev = to_limbs(pow(psi, _bitrev(k, bits), q) * r % q for k in range(n))
    ipsi_rev = to_limbs(pow(psi_inv, _bitrev(k, bits), q) * r % q for k in range(n))
    n_scale = pow(n, -1, q) * r * r % q
    return NttTables(psi_rev, ipsi_rev, n_scale, psi)
