"""Shamir sharing over Z_Q with Feldman commitments, committee-to-committee
redistribution, and a commit-then-reveal beacon.

Secrets are vectors (one Shamir instance per polynomial coefficient) held as
(n, 2) uint64 limb arrays so that sharing and reconstruction run through the
vectorised Z_q kernels.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence

import gmpy2
import numpy as np

from . import zq
from .errors import ParameterError, ProtocolError
from .params import SCHNORR_GROUPS
from .ring import uniform_below

RHO_BITS = 64


@dataclass(frozen=True)
class DlogGroup:
    """Order-q subgroup of Z_p^* with p = k*q + 1."""

    q: int
    p: int
    g: int

    def __post_init__(self):
        if (self.p - 1) % self.q:
            raise ParameterError("q does not divide p - 1")
        if self.g % self.p in (0, 1) or pow(self.g, self.q, self.p) != 1:
            raise ParameterError("g does not generate the order-q subgroup")

    @classmethod
    def for_modulus(cls, q: int) -> "DlogGroup":
        if q in SCHNORR_GROUPS:
            p, g = SCHNORR_GROUPS[q]
            return cls(q, p, g)
        return cls.generate(q)

    @classmethod
    def generate(cls, q: int) -> "DlogGroup":
        """Smallest even k with k*q + 1 prime; generator h^k for the first h that works."""
        k = 2
        while not gmpy2.is_prime(k * q + 1):
            k += 2
        p = k * q + 1
        h = 2
        while pow(h, k, p) == 1:
            h += 1
        return cls(q, p, pow(h, k, p))

    def exp(self, e: int) -> int:
        return int(gmpy2.powmod(self.g, e, self.p))

    @property
    def element_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8


def _digest_limbs(arr: np.ndarray) -> bytes:
    return hashlib.sha256(np.ascontiguousarray(arr, dtype="<u8").tobytes()).digest()


@dataclass(frozen=True, eq=False)
class Feldman:
    """Commitments g^{a_{c,k}} for sharing-polynomial coefficient c and secret coordinate k,
    plus the dealer's published digests of every recipient's share."""

    group: DlogGroup
    rows: tuple[tuple[int, ...], ...]
    share_digests: Mapping[int, bytes] = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return len(self.rows) - 1

    @property
    def width(self) -> int:
        return len(self.rows[0])

    @cached_property
    def transcript_digest(self) -> bytes:
        h = hashlib.sha256(b"feldman")
        nb = self.group.element_bytes
        for row in self.rows:
            h.update(b"".join(int(v).to_bytes(nb, "little") for v in row))
        for i in sorted(self.share_digests):
            h.update(i.to_bytes(8, "little") + self.share_digests[i])
        return h.digest()

    @cached_property
    def rho(self) -> np.ndarray:
        """Fiat-Shamir combination weights, fixed by the whole dealing transcript."""
        n = self.width
        out = bytearray()
        ctr = 0
        while len(out) < 8 * n:
            out += hashlib.sha256(self.transcript_digest + ctr.to_bytes(8, "little")).digest()
            ctr += 1
        lo = np.frombuffer(bytes(out[:8 * n]), dtype="<u8").astype(np.uint64)
        rho = np.zeros((n, 2), dtype=np.uint64)
        rho[:, 0] = lo % np.uint64(self.group.q) if self.group.q < 1 << 64 else lo
        return rho

    @cached_property
    def folded(self) -> tuple[int, ...]:
        """D_c = prod_k C_{c,k}^{rho_k}."""
        p = self.group.p
        rho = [gmpy2.mpz(int(r)) for r in self.rho[:, 0]]
        out = []
        for row in self.rows:
            acc = gmpy2.mpz(1)
            for ck, r in zip(row, rho):
                acc = acc * gmpy2.powmod(ck, r, p) % p
            out.append(int(acc))
        return tuple(out)

    @property
    def num_bytes(self) -> int:
        return len(self.rows) * self.width * self.group.element_bytes


@dataclass(frozen=True, eq=False)
class ShareSet:
    threshold: int
    count: int
    shares: Mapping[int, np.ndarray]
    feldman: Feldman

    @property
    def q(self) -> int:
        return self.feldman.group.q


def _as_limbs(secret, q: int) -> np.ndarray:
    if isinstance(secret, np.ndarray) and secret.dtype == np.uint64 and secret.ndim == 2:
        return secret
    return zq.to_limbs(int(v) % q for v in secret)


def _commit_rows(coeffs: Sequence[np.ndarray], group: DlogGroup) -> tuple[tuple[int, ...], ...]:
    g, p = gmpy2.mpz(group.g), gmpy2.mpz(group.p)
    return tuple(tuple(int(gmpy2.powmod(g, a, p)) for a in zq.from_limbs(c)) for c in coeffs)


def share(secret, C: int, A: int, group: DlogGroup, rng: np.random.Generator) -> ShareSet:
    """Degree-A sharing of every coordinate of ``secret`` among members 1..C."""
    if not (0 <= A < C):
        raise ParameterError(f"need 0 <= A < C, got A={A}, C={C}")
    q = group.q
    mod = zq.Modulus(q)
    base = _as_limbs(secret, q)
    n = base.shape[0]
    coeffs = [base] + [uniform_below(q, n, rng) for _ in range(A)]
    shares = {}
    for i in range(1, C + 1):
        acc = coeffs[A]
        for c in reversed(coeffs[:A]):
            acc = zq.add(zq.scale(acc, i, mod), c, mod)
        shares[i] = acc
    digests = {i: _digest_limbs(s) for i, s in shares.items()}
    return ShareSet(A, C, shares, Feldman(group, _commit_rows(coeffs, group), digests))


def _powers(i: int, count: int, q: int) -> list[int]:
    out, v = [], 1
    for _ in range(count):
        out.append(v)
        v = v * i % q
    return out


def verify_share(i: int, share_i, feldman: Feldman, group: DlogGroup | None = None,
                 exact: bool = False) -> bool:
    """Check g^{share_i} against the commitments evaluated at i.

    The default check folds all coordinates with transcript-derived weights
    rho (one exponentiation on each side plus a cached fold per dealing); a
    tampered coordinate slips through with probability at most 2^-64.
    ``exact=True`` checks every coordinate separately.
    """
    group = group or feldman.group
    q, p = group.q, group.p
    y = _as_limbs(share_i, q)
    if y.shape[0] != feldman.width:
        return False
    want = feldman.share_digests.get(i)
    if want is not None and want != _digest_limbs(y):
        return False
    pw = _powers(i, len(feldman.rows), q)
    if exact:
        for k, yk in enumerate(zq.from_limbs(y)):
            rhs = gmpy2.mpz(1)
            for row, e in zip(feldman.rows, pw):
                rhs = rhs * gmpy2.powmod(row[k], e, p) % p
            if gmpy2.powmod(group.g, yk, p) != rhs:
                return False
        return True
    lhs = gmpy2.powmod(group.g, zq.dot(y, feldman.rho, zq.Modulus(q)), p)
    rhs = gmpy2.mpz(1)
    for d, e in zip(feldman.folded, pw):
        rhs = rhs * gmpy2.powmod(d, e, p) % p
    return lhs == rhs


def lagrange_coeff(quorum: Iterable[int], i: int, q: int) -> int:
    """Weight of share i when interpolating the constant term from ``quorum``."""
    idx = list(quorum)
    if len(set(idx)) != len(idx):
        raise ParameterError("repeated indices in quorum")
    if any(j % q == 0 for j in idx):
        raise ParameterError("share indices must be nonzero mod q")
    if i not in idx:
        raise ParameterError(f"{i} is not in the quorum")
    num, den = 1, 1
    for j in idx:
        if j != i:
            num = num * j % q
            den = den * (j - i) % q
    return num * pow(den, -1, q) % q


def reconstruct(shares: Mapping[int, np.ndarray], q: int) -> np.ndarray:
    mod = zq.Modulus(q)
    quorum = sorted(shares)
    acc = None
    for i in quorum:
        term = zq.scale(_as_limbs(shares[i], q), lagrange_coeff(quorum, i, q), mod)
        acc = term if acc is None else zq.add(acc, term, mod)
    return acc


def reshare_dealings(old: ShareSet, old_quorum: Iterable[int], new_c: int, new_a: int,
                     rng: np.random.Generator) -> dict[int, ShareSet]:
    """Each old member j shares lambda_j * share_j among the new committee."""
    quorum = sorted(set(old_quorum))
    if len(quorum) < old.threshold + 1:
        raise ProtocolError(f"reshare needs {old.threshold + 1} old members, got {len(quorum)}")
    missing = [j for j in quorum if j not in old.shares]
    if missing:
        raise ProtocolError(f"old members {missing} hold no share")
    q = old.q
    mod = zq.Modulus(q)
    group = old.feldman.group
    return {j: share(zq.scale(old.shares[j], lagrange_coeff(quorum, j, q), mod), new_c, new_a,
                     group, rng)
            for j in quorum}


def check_dealer(old: Feldman, j: int, lam: int, dealing: Feldman) -> bool:
    """Does the dealing's constant term commit to lam * share_j under the old commitments?

    Folded with the old transcript weights: prod_k C'_{0,k}^{rho_k} must equal
    (prod_c D_c^{j^c})^lam.
    """
    group = old.group
    q, p = group.q, group.p
    rho = [gmpy2.mpz(int(r)) for r in old.rho[:, 0]]
    lhs = gmpy2.mpz(1)
    for ck, r in zip(dealing.rows[0], rho):
        lhs = lhs * gmpy2.powmod(ck, r, p) % p
    rhs = gmpy2.mpz(1)
    for d, e in zip(old.folded, _powers(j, len(old.rows), q)):
        rhs = rhs * gmpy2.powmod(d, e, p) % p
    return lhs == gmpy2.powmod(rhs, lam, p)


def combine_dealings(dealings: Mapping[int, ShareSet], new_c: int, new_a: int) -> ShareSet:
    """New share_i = sum_j subshare_{j->i}; commitments multiply coordinate-wise."""
    first = next(iter(dealings.values()))
    group = first.feldman.group
    q, p = group.q, group.p
    mod = zq.Modulus(q)
    shares = {}
    for i in range(1, new_c + 1):
        acc = None
        for d in dealings.values():
            acc = d.shares[i] if acc is None else zq.add(acc, d.shares[i], mod)
        shares[i] = acc
    rows = []
    for c in range(new_a + 1):
        acc = [gmpy2.mpz(v) for v in first.feldman.rows[c]]
        for d in list(dealings.values())[1:]:
            acc = [a * b % p for a, b in zip(acc, d.feldman.rows[c])]
        rows.append(tuple(int(v) for v in acc))
    digests = {i: _digest_limbs(s) for i, s in shares.items()}
    return ShareSet(new_a, new_c, shares, Feldman(group, tuple(rows), digests))


def reshare(old: ShareSet, old_quorum: Iterable[int], new_c: int, new_a: int,
            group: DlogGroup | None, rng: np.random.Generator, verify: bool = True) -> ShareSet:
    """Redistribute the shared secret to a fresh committee of size new_c, threshold new_a."""
    quorum = sorted(set(old_quorum))
    dealings = reshare_dealings(old, quorum, new_c, new_a, rng)
    if verify:
        q = old.q
        bad = [j for j, d in dealings.items()
               if not check_dealer(old.feldman, j, lagrange_coeff(quorum, j, q), d.feldman)]
        if bad:
            raise ProtocolError(f"dealers {bad} are inconsistent with the old commitments")
    new = combine_dealings(dealings, new_c, new_a)
    if verify:
        bad = [i for i, s in new.shares.items() if not verify_share(i, s, new.feldman)]
        if bad:
            raise ProtocolError(f"recipients {bad} received shares failing verification")
    return new


def beacon_commit(value: int, nonce: bytes, hash_fn: Callable = hashlib.sha256) -> bytes:
    return hash_fn(bytes(nonce) + int(value).to_bytes(16, "little")).digest()


class RandBeaconSession:
    """Commit-then-reveal randomness.  Reveals are accepted only after the commit phase closes."""

    def __init__(self, q: int, members: Iterable = ()):
        self.q = q
        self.members = list(members)
        self.commitments: dict = {}
        self.reveals: dict = {}
        self.excluded: list = []
        self.closed = False

    def commit(self, member, digest: bytes) -> None:
        if self.closed:
            raise ProtocolError("commit phase already closed")
        if member in self.commitments:
            raise ProtocolError(f"{member!r} already committed")
        if len(digest) != 32:
            raise ParameterError("commitment digest must be 32 bytes")
        self.commitments[member] = bytes(digest)

    def close(self) -> None:
        missing = [m for m in self.members if m not in self.commitments]
        if missing:
            raise ProtocolError(f"members {missing} have not committed")
        self.closed = True

    def reveal(self, member, value: int, nonce: bytes) -> bool:
        if not self.closed:
            raise ProtocolError("reveal before all commitments are posted")
        ok = (member in self.commitments and 0 <= value < self.q
              and beacon_commit(value, nonce) == self.commitments[member])
        if ok:
            self.reveals[member] = (value, bytes(nonce))
        elif member not in self.excluded:
            self.excluded.append(member)
        return ok


def beacon_finalize(session: RandBeaconSession) -> int:
    """Sum of valid reveals mod q; members with no valid reveal are excluded."""
    if not session.closed:
        raise ProtocolError("commit phase still open")
    for m in session.commitments:
        if m not in session.reveals and m not in session.excluded:
            session.excluded.append(m)
    return sum(v for v, _ in session.reveals.values()) % session.q
