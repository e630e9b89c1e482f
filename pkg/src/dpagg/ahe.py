"""Additively homomorphic BFV encryption with round-tagged plaintexts and threshold decryption.

Plaintexts reserve slot 0 for the round number; the remaining N-1 slots carry
fixed-point encoded update entries modulo ``t_plain``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import params as defaults
from .errors import ConfigError, EncodingError, ParameterError, ProtocolError
from .ring import (NoiseDist, RingParams, RingPoly, ring_add, ring_mul, ring_scale, ring_sub,
                   ring_sum, sample_poly)

CT_HEADER_BYTES = 16 + 8 + 8


@dataclass(frozen=True)
class AheParams:
    ring: RingParams
    t_plain: int
    delta: int
    fresh_noise_bound: int
    smudge_lambda: int
    noise_stddev: float = defaults.GAUSSIAN_STDDEV

    def __post_init__(self):
        if self.t_plain < 2:
            raise ConfigError("t_plain must be at least 2")
        if self.delta * self.t_plain > self.ring.modulus:
            raise ConfigError("delta * t_plain exceeds Q")
        if self.fresh_noise_bound < 1 or self.smudge_lambda < 1:
            raise ConfigError("fresh noise bound and smudging lambda must be positive")

    @classmethod
    def create(cls, ring: RingParams, t_plain: int = defaults.T_PLAIN,
               smudge_lambda: int = defaults.SMUDGE_LAMBDA,
               noise_stddev: float = defaults.GAUSSIAN_STDDEV) -> "AheParams":
        return cls(ring, t_plain, ring.modulus // t_plain,
                   fresh_noise_bound(ring.degree, noise_stddev), smudge_lambda, noise_stddev)

    @property
    def slots(self) -> int:
        return self.ring.degree - 1

    @property
    def gaussian(self) -> NoiseDist:
        return NoiseDist.gaussian(self.noise_stddev)

    @cached_property
    def digest(self) -> bytes:
        h = hashlib.sha256(b"ahe-params")
        for v in (self.ring.degree, self.ring.modulus, self.t_plain, self.delta):
            h.update(v.to_bytes(16, "little"))
        return h.digest()

    @property
    def ciphertext_bytes(self) -> int:
        return CT_HEADER_BYTES + 2 * self.ring.poly_bytes


def fresh_noise_bound(degree: int, stddev: float) -> int:
    """Bound on ||r*e + e2 - s*e1||_inf for a fresh ciphertext.

    Gaussian samples are truncated at floor(6*stddev) and r, s are ternary, so
    each product term is at most N*tail per coefficient: (2N + 1) * tail.
    """
    return (2 * degree + 1) * NoiseDist.gaussian(stddev).tail


@dataclass(frozen=True)
class PublicKey:
    a: RingPoly
    b: RingPoly

    @cached_property
    def digest(self) -> bytes:
        return hashlib.sha256(self.a.to_bytes() + self.b.to_bytes()).digest()


@dataclass(frozen=True)
class SecretKey:
    s: RingPoly


@dataclass(frozen=True)
class Plaintext:
    round_t: int
    values: tuple[int, ...]
    scale: float = field(default=1.0, compare=False)

    def coeffs(self, t_plain: int) -> list[int]:
        return [self.round_t % t_plain, *self.values]


@dataclass(frozen=True)
class EncRandomness:
    r_poly: RingPoly
    e1: RingPoly
    e2: RingPoly


@dataclass(frozen=True)
class Ciphertext:
    c1: RingPoly
    c2: RingPoly
    round_tag: int
    adds_count: int = 1
    t_plain: int = defaults.T_PLAIN

    def __post_init__(self):
        if self.adds_count < 1:
            raise ParameterError("adds_count must be at least 1")
        if self.c1.params != self.c2.params:
            raise ParameterError("ciphertext halves use different rings")

    @cached_property
    def wire(self) -> bytes:
        return (self.t_plain.to_bytes(16, "little")
                + (self.round_tag % (1 << 64)).to_bytes(8, "little")
                + self.adds_count.to_bytes(8, "little")
                + self.c1.to_bytes() + self.c2.to_bytes())

    def to_bytes(self) -> bytes:
        return self.wire

    @cached_property
    def digest(self) -> bytes:
        return hashlib.sha256(self.wire).digest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ciphertext":
        t_plain = int.from_bytes(data[:16], "little")
        round_tag = int.from_bytes(data[16:24], "little")
        adds = int.from_bytes(data[24:32], "little")
        n = int.from_bytes(data[32:48], "little")
        half = 32 + 16 * n
        c1 = RingPoly.from_bytes(data[32:32 + half])
        c2 = RingPoly.from_bytes(data[32 + half:32 + 2 * half])
        return cls(c1, c2, round_tag, adds, t_plain)

    def __repr__(self):
        return (f"Ciphertext(N={self.c1.params.degree}, round_tag={self.round_tag}, "
                f"adds_count={self.adds_count}, digest={self.digest.hex()[:12]})")


def keygen(params: AheParams, rng: np.random.Generator) -> tuple[PublicKey, SecretKey]:
    ring = params.ring
    s = sample_poly(NoiseDist.ternary(), ring, rng)
    a = sample_poly(NoiseDist.uniform_full(), ring, rng)
    e = sample_poly(params.gaussian, ring, rng)
    b = ring_add(ring_mul(a, s, ring), e, ring)
    return PublicKey(a, b), SecretKey(s)


def encode(round_t: int, update: Sequence[float], scale: float, params: AheParams,
           k_max: int = 1) -> Plaintext:
    """Fixed-point encode ``update`` behind the round number.

    Entries must satisfy |x| * scale < t_plain / (2 * k_max) so that a sum of
    k_max such plaintexts still decodes without wrapping.
    """
    x = np.asarray(update, dtype=float).ravel()
    if x.size > params.slots:
        raise EncodingError(f"update has {x.size} entries, only {params.slots} slots")
    limit = params.t_plain / (2 * k_max)
    if x.size and not np.all(np.abs(x) * scale < limit):
        raise EncodingError(f"entry exceeds plaintext headroom {limit / scale:.6g} for k_max={k_max}")
    q = np.rint(x * scale).astype(np.int64)
    vals = [int(v) % params.t_plain for v in q]
    vals.extend([0] * (params.slots - len(vals)))
    return Plaintext(round_t, tuple(vals), scale)


def decode(pt: Plaintext, scale: float, length: int | None = None, t_plain: int = defaults.T_PLAIN
           ) -> np.ndarray:
    half = t_plain // 2
    vals = pt.values if length is None else pt.values[:length]
    return np.array([(v - t_plain if v > half else v) / scale for v in vals], dtype=float)


def _message_poly(pt: Plaintext, params: AheParams) -> RingPoly:
    d = params.delta
    return RingPoly.from_coeffs([d * m for m in pt.coeffs(params.t_plain)], params.ring)


def sample_randomness(params: AheParams, rng: np.random.Generator) -> EncRandomness:
    ring = params.ring
    r = sample_poly(NoiseDist.ternary(), ring, rng)
    e1 = sample_poly(params.gaussian, ring, rng)
    e2 = sample_poly(params.gaussian, ring, rng)
    return EncRandomness(r, e1, e2)


def encrypt_with(pk: PublicKey, pt: Plaintext, params: AheParams, rand: EncRandomness) -> Ciphertext:
    """Deterministic encryption given the randomness (also used to re-check witnesses)."""
    ring = params.ring
    c1 = ring_add(ring_mul(pk.a, rand.r_poly, ring), rand.e1, ring)
    c2 = ring_add(ring_add(ring_mul(pk.b, rand.r_poly, ring), rand.e2, ring),
                  _message_poly(pt, params), ring)
    return Ciphertext(c1, c2, pt.round_t, 1, params.t_plain)


def encrypt(pk: PublicKey, pt: Plaintext, params: AheParams, rng: np.random.Generator
            ) -> tuple[Ciphertext, EncRandomness]:
    rand = sample_randomness(params, rng)
    return encrypt_with(pk, pt, params, rand), rand


def ct_add(x: Ciphertext, y: Ciphertext) -> Ciphertext:
    # round tags may differ; freshness is enforced by leaf verification, not here
    if x.c1.params != y.c1.params or x.t_plain != y.t_plain:
        raise ParameterError("ciphertexts use different parameters")
    ring = x.c1.params
    return Ciphertext(ring_add(x.c1, y.c1, ring), ring_add(x.c2, y.c2, ring), x.round_tag,
                      x.adds_count + y.adds_count, x.t_plain)


def ct_sum(cts: Sequence[Ciphertext]) -> Ciphertext:
    if not cts:
        raise ParameterError("empty ciphertext sum")
    ring = cts[0].c1.params
    return Ciphertext(ring_sum([c.c1 for c in cts], ring), ring_sum([c.c2 for c in cts], ring),
                      cts[0].round_tag, sum(c.adds_count for c in cts), cts[0].t_plain)


def ct_scalar_mul(x: Ciphertext, k: int) -> Ciphertext:
    if not 0 <= k < x.t_plain:
        raise ParameterError("scalar must lie in [0, t_plain)")
    ring = x.c1.params
    return Ciphertext(ring_scale(x.c1, k, ring), ring_scale(x.c2, k, ring), x.round_tag,
                      max(1, x.adds_count * k), x.t_plain)


def _round_to_plain(noisy: RingPoly, params: AheParams) -> list[int]:
    q, t = params.ring.modulus, params.t_plain
    # round-half-up of x * t / Q on the centered representative
    return [((2 * x * t + q) // (2 * q)) % t for x in noisy.centered()]


def _plaintext_from(coeffs: list[int], scale: float) -> Plaintext:
    return Plaintext(coeffs[0], tuple(coeffs[1:]), scale)


def decrypt(sk: SecretKey, ct: Ciphertext, params: AheParams, scale: float = 1.0) -> Plaintext:
    """Central decryption.  Noise overflow is not signalled: the plaintext is just wrong."""
    ring = params.ring
    noisy = ring_sub(ct.c2, ring_mul(ct.c1, sk.s, ring), ring)
    return _plaintext_from(_round_to_plain(noisy, params), scale)


def decryption_noise(sk: SecretKey, ct: Ciphertext, pt, params: AheParams) -> RingPoly:
    """e_small = c2 - c1*s - delta*m (test/measurement helper; needs the secret key).

    ``pt`` may be a list of the plaintexts summed into ``ct``; their slots are then
    added as integers, so the wrap of the reduced sum is not counted as noise.
    """
    ring = params.ring
    pts = [pt] if isinstance(pt, Plaintext) else list(pt)
    t = params.t_plain
    msg = [sum(col) for col in zip(*(p.coeffs(t) for p in pts))]
    delta_m = RingPoly.from_coeffs([params.delta * m for m in msg], ring)
    return ring_sub(ring_sub(ct.c2, ring_mul(ct.c1, sk.s, ring), ring), delta_m, ring)


def smudge_bound(fresh_bound: int, adds: int, smudge_lambda: int) -> int:
    if adds < 1:
        raise ParameterError("K must be at least 1")
    return (1 << smudge_lambda) * fresh_bound * adds


def check_smudging_headroom(params: AheParams, committee_size: int, max_adds: int) -> int:
    """Return the smudging bound after asserting C*bound + B_fresh*K < delta/2."""
    bound = smudge_bound(params.fresh_noise_bound, max_adds, params.smudge_lambda)
    total = committee_size * bound + params.fresh_noise_bound * max_adds
    if 2 * total >= params.delta:
        raise ConfigError(
            f"smudging headroom exceeded: C*bound + B_fresh*K = 2^{total.bit_length()} "
            f">= delta/2 = 2^{(params.delta // 2).bit_length()}")
    return bound


def partial_decrypt(share: RingPoly, lagrange: int, c1: RingPoly, bound: int, params: AheParams,
                    rng: np.random.Generator) -> RingPoly:
    """lagrange * (c1 * share) + e with e uniform in [-bound, bound] per coefficient."""
    ring = params.ring
    part = ring_scale(ring_mul(c1, share, ring), lagrange, ring)
    if bound == 0:
        return part
    return ring_add(part, sample_poly(NoiseDist.bounded(bound), ring, rng), ring)


def combine_partials(c2: RingPoly, partials: Sequence[RingPoly], params: AheParams,
                     expected: int | None = None, scale: float = 1.0) -> Plaintext:
    if not partials:
        raise ProtocolError("no partial decryptions supplied")
    if expected is not None and len(partials) != expected:
        raise ProtocolError(f"quorum needs {expected} partial decryptions, got {len(partials)}")
    ring = params.ring
    noisy = ring_sub(c2, ring_sum(partials, ring), ring)
    return _plaintext_from(_round_to_plain(noisy, params), scale)


def num_ciphertexts(num_params: int, degree: int) -> int:
    """Ciphertexts needed for an update: slot 0 of each carries the round number."""
    slots = degree - 1
    return -(-num_params // slots)
