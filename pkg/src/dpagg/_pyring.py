"""Pure-Python Z_q kernels, used when the compiled extension is unavailable.

Same signatures and bit-exact results as ``dpagg._ringcore``.  The fast
multiplication path is Kronecker substitution: pack both operands into one
big integer each, multiply once, and fold the negacyclic wrap.
"""
from __future__ import annotations

from ._limbs import from_limbs, to_limbs

BACKEND = "python"


def _check(a, b):
    if a.shape[0] != b.shape[0]:
        raise ValueError("length mismatch")


def add(a, b, mod):
    _check(a, b)
    q = mod.q
    return to_limbs((x + y) % q for x, y in zip(from_limbs(a), from_limbs(b)))


def sub(a, b, mod):
    _check(a, b)
    q = mod.q
    return to_limbs((x - y) % q for x, y in zip(from_limbs(a), from_limbs(b)))


def scale(a, k, mod):
    q = mod.q
    k %= q
    return to_limbs(x * k % q for x in from_limbs(a))


def mul_pointwise(a, b, mod):
    _check(a, b)
    q = mod.q
    return to_limbs(x * y % q for x, y in zip(from_limbs(a), from_limbs(b)))


def dot(a, b, mod):
    _check(a, b)
    return sum(x * y for x, y in zip(from_limbs(a), from_limbs(b))) % mod.q


def evaluate(a, x, mod):
    q = mod.q
    acc = 0
    for c in reversed(from_limbs(a)):
        acc = (acc * x + c) % q
    return acc


def schoolbook(a: list[int], b: list[int], q: int) -> list[int]:
    n = len(a)
    out = [0] * n
    for i, ai in enumerate(a):
        if not ai:
            continue
        for j, bj in enumerate(b):
            k = i + j
            if k < n:
                out[k] += ai * bj
            else:
                out[k - n] -= ai * bj
    return [c % q for c in out]


def kronecker(a: list[int], b: list[int], q: int) -> list[int]:
    n = len(a)
    width = (2 * q.bit_length() + n.bit_length() + 8) // 8 + 1
    pa = int.from_bytes(b"".join(x.to_bytes(width, "little") for x in a), "little")
    pb = int.from_bytes(b"".join(x.to_bytes(width, "little") for x in b), "little")
    raw = (pa * pb).to_bytes(2 * n * width, "little")
    out = []
    for k in range(n):
        low = int.from_bytes(raw[k * width:(k + 1) * width], "little")
        high = int.from_bytes(raw[(k + n) * width:(k + n + 1) * width], "little")
        out.append((low - high) % q)
    return out


def negacyclic_mul(a, b, mod, tables=None):
    _check(a, b)
    ia, ib = from_limbs(a), from_limbs(b)
    if tables is None:
        return to_limbs(schoolbook(ia, ib, mod.q))
    return to_limbs(kronecker(ia, ib, mod.q))

