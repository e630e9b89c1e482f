"""Arithmetic in R_Q = Z_Q[X]/(X^N + 1) and the noise distributions BFV samples from."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import gmpy2
import numpy as np

from . import zq
from .errors import ParameterError

COEFF_BYTES = 16
HEADER_BYTES = 2 * COEFF_BYTES


@dataclass(frozen=True)
class RingParams:
    degree: int
    modulus: int

    def __post_init__(self):
        n, q = self.degree, self.modulus
        if n < 1 or n & (n - 1):
            raise ParameterError(f"degree must be a power of two, got {n}")
        if q.bit_length() > zq.MAX_MODULUS_BITS:
            raise ParameterError(f"modulus exceeds {zq.MAX_MODULUS_BITS} bits")
        if not gmpy2.is_prime(q) or q == 2:
            raise ParameterError(f"modulus must be an odd prime, got {q}")
        if q <= 2 * n:
            raise ParameterError("modulus must exceed 2N")

    @cached_property
    def mod(self) -> zq.Modulus:
        return zq.Modulus(self.modulus)

    @property
    def ntt_friendly(self) -> bool:
        return zq.ntt_tables(self.degree, self.modulus) is not None

    @property
    def poly_bytes(self) -> int:
        return HEADER_BYTES + self.degree * COEFF_BYTES


class RingPoly:
    """Immutable polynomial with coefficients reduced into [0, Q)."""

    __slots__ = ("params", "limbs", "__dict__")

    def __init__(self, params: RingParams, limbs: np.ndarray):
        if limbs.shape != (params.degree, 2) or limbs.dtype != np.uint64:
            raise ParameterError(
                f"expected ({params.degree}, 2) uint64 limbs, got {limbs.shape} {limbs.dtype}")
        limbs = np.ascontiguousarray(limbs)
        limbs.flags.writeable = False
        self.params = params
        self.limbs = limbs

    @classmethod
    def from_coeffs(cls, coeffs: Sequence[int], params: RingParams) -> "RingPoly":
        if len(coeffs) != params.degree:
            raise ParameterError(f"expected {params.degree} coefficients, got {len(coeffs)}")
        q = params.modulus
        return cls(params, zq.to_limbs(int(c) % q for c in coeffs))

    @classmethod
    def from_small(cls, values, params: RingParams) -> "RingPoly":
        """Build from signed machine integers (noise, ternary keys)."""
        values = np.asarray(values, dtype=np.int64)
        if values.shape != (params.degree,):
            raise ParameterError(f"expected {params.degree} coefficients")
        return cls(params, zq.small_to_limbs(values, params.modulus))

    @classmethod
    def zero(cls, params: RingParams) -> "RingPoly":
        return cls(params, zq.zeros(params.degree))

    @classmethod
    def monomial(cls, power: int, params: RingParams, coeff: int = 1) -> "RingPoly":
        """coeff * X^power, reduced with X^N = -1."""
        n = params.degree
        sign = -1 if (power // n) % 2 else 1
        c = [0] * n
        c[power % n] = sign * coeff
        return cls.from_coeffs(c, params)

    @cached_property
    def coeffs(self) -> tuple[int, ...]:
        return tuple(zq.from_limbs(self.limbs))

    def centered(self) -> list[int]:
        return zq.centered(list(self.coeffs), self.params.modulus)

    def inf_norm(self) -> int:
        return max((abs(c) for c in self.centered()), default=0)

    def to_bytes(self) -> bytes:
        p = self.params
        return (p.degree.to_bytes(COEFF_BYTES, "little") + p.modulus.to_bytes(COEFF_BYTES, "little")
                + self.raw_bytes())

    def raw_bytes(self) -> bytes:
        return self.limbs.astype("<u8", copy=False).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "RingPoly":
        n = int.from_bytes(data[:COEFF_BYTES], "little")
        q = int.from_bytes(data[COEFF_BYTES:HEADER_BYTES], "little")
        params = RingParams(n, q)
        body = data[HEADER_BYTES:HEADER_BYTES + n * COEFF_BYTES]
        if len(body) != n * COEFF_BYTES:
            raise ParameterError("truncated polynomial encoding")
        limbs = np.frombuffer(body, dtype="<u8").astype(np.uint64).reshape(n, 2)
        poly = cls(params, limbs.copy())
        if any(c >= q for c in poly.coeffs):
            raise ParameterError("coefficient not reduced mod Q")
        return poly

    def __eq__(self, other):
        if not isinstance(other, RingPoly):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.limbs, other.limbs)

    def __hash__(self):
        return hash((self.params, self.raw_bytes()))

    def __add__(self, other):
        return ring_add(self, other, self.params)

    def __sub__(self, other):
        return ring_sub(self, other, self.params)

    def __mul__(self, other):
        if isinstance(other, int):
            return ring_scale(self, other, self.params)
        return ring_mul(self, other, self.params)

    __rmul__ = __mul__

    def __neg__(self):
        return ring_scale(self, -1, self.params)

    def __repr__(self):
        head = ", ".join(str(c) for c in self.coeffs[:4])
        return f"RingPoly(N={self.params.degree}, [{head}{', ...' if self.params.degree > 4 else ''}])"


def _conform(a: RingPoly, p: RingParams) -> None:
    if a.params != p:
        raise ParameterError(f"polynomial parameters {a.params} do not match {p}")


def ring_add(a: RingPoly, b: RingPoly, p: RingParams) -> RingPoly:
    _conform(a, p)
    _conform(b, p)
    return RingPoly(p, zq.add(a.limbs, b.limbs, p.mod))


def ring_sub(a: RingPoly, b: RingPoly, p: RingParams) -> RingPoly:
    _conform(a, p)
    _conform(b, p)
    return RingPoly(p, zq.sub(a.limbs, b.limbs, p.mod))


def ring_scale(a: RingPoly, k: int, p: RingParams) -> RingPoly:
    _conform(a, p)
    return RingPoly(p, zq.scale(a.limbs, k % p.modulus, p.mod))


def ring_sum(polys: Sequence[RingPoly], p: RingParams) -> RingPoly:
    for poly in polys:
        _conform(poly, p)
    if len(polys) <= 8:
        acc = zq.zeros(p.degree)
        for poly in polys:
            acc = zq.add(acc, poly.limbs, p.mod)
        return RingPoly(p, acc)
    return RingPoly(p, zq.sum_rows([poly.limbs for poly in polys], p.mod))


def ring_mul(a: RingPoly, b: RingPoly, p: RingParams, method: str = "fast") -> RingPoly:
    """Negacyclic product.

    ``method="fast"`` uses the transform path when the modulus allows it;
    ``"schoolbook"`` forces the O(N^2) convolution.  Both agree bit-exactly.
    """
    _conform(a, p)
    _conform(b, p)
    if method not in ("fast", "schoolbook"):
        raise ParameterError(f"unknown multiplication method {method!r}")
    return RingPoly(p, zq.negacyclic_mul(a.limbs, b.limbs, p.mod, fast=method == "fast"))


def ring_eval(a: RingPoly, point: int, p: RingParams) -> int:
    _conform(a, p)
    if not 0 <= point < p.modulus:
        raise ParameterError("evaluation point out of range")
    return zq.evaluate(a.limbs, point, p.mod)


@dataclass(frozen=True)
class NoiseDist:
    kind: str
    stddev: float = 0.0
    bound: int = 0

    KINDS = ("uniform_full", "ternary", "discrete_gaussian", "uniform_bounded")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"unknown distribution {self.kind!r}")
        if self.kind == "discrete_gaussian" and not self.stddev > 0:
            raise ParameterError("gaussian stddev must be positive")
        if self.kind == "uniform_bounded" and self.bound < 1:
            raise ParameterError("bound must be at least 1")

    @classmethod
    def uniform_full(cls):
        return cls("uniform_full")

    @classmethod
    def ternary(cls):
        return cls("ternary")

    @classmethod
    def gaussian(cls, stddev: float = 3.2):
        return cls("discrete_gaussian", stddev=stddev)

    @classmethod
    def bounded(cls, bound: int):
        return cls("uniform_bounded", bound=bound)

    @property
    def tail(self) -> int:
        """Support cutoff of the gaussian: |x| <= floor(6 * stddev)."""
        return int(math.floor(6 * self.stddev))


def _gaussian_table(stddev: float, tail: int) -> tuple[np.ndarray, np.ndarray]:
    support = np.arange(-tail, tail + 1)
    weights = np.exp(-(support.astype(float) ** 2) / (2 * stddev * stddev))
    cdf = np.cumsum(weights)
    return support, cdf / cdf[-1]


def sample_discrete_gaussian(stddev: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Centered discrete gaussian via inversion of a cumulative table (CDT), truncated at 6 sigma."""
    support, cdf = _gaussian_table(stddev, int(math.floor(6 * stddev)))
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return support[np.minimum(idx, support.size - 1)]


def uniform_below(bound: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` uniform residues in [0, bound) as limbs (bound <= 2^128)."""
    if bound <= 1 << 63:
        out = np.zeros((n, 2), dtype=np.uint64)
        out[:, 0] = rng.integers(0, bound, size=n, dtype=np.uint64)
        return out
    hi_bound = (bound - 1) >> 64
    b_lo, b_hi = np.uint64(bound & zq.MASK64), np.uint64(bound >> 64)
    out = np.empty((n, 2), dtype=np.uint64)
    todo = np.arange(n)
    while todo.size:
        lo = rng.integers(0, 1 << 64, size=todo.size, dtype=np.uint64, endpoint=False)
        hi = rng.integers(0, hi_bound, size=todo.size, dtype=np.uint64, endpoint=True)
        ok = (hi < b_hi) | ((hi == b_hi) & (lo < b_lo))
        out[todo[ok], 0] = lo[ok]
        out[todo[ok], 1] = hi[ok]
        todo = todo[~ok]
    return out


def sample_poly(dist: NoiseDist, p: RingParams, rng: np.random.Generator) -> RingPoly:
    n = p.degree
    if dist.kind == "uniform_full":
        return RingPoly(p, uniform_below(p.modulus, n, rng))
    if dist.kind == "ternary":
        return RingPoly.from_small(rng.integers(-1, 2, size=n), p)
    if dist.kind == "discrete_gaussian":
        return RingPoly.from_small(sample_discrete_gaussian(dist.stddev, n, rng), p)
    # uniform_bounded: shift [0, 2B] down by B
    b = dist.bound
    if 2 * b + 1 <= 1 << 62:
        return RingPoly.from_small(rng.integers(-b, b, size=n, endpoint=True), p)
    raw = zq.from_limbs(uniform_below(2 * b + 1, n, rng))
    return RingPoly.from_coeffs([v - b for v in raw], p)
