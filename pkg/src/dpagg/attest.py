"""Attestation that a ciphertext is well formed, fresh and carries a bounded update.

The prover here is a trusted oracle: it checks the witness in the clear and
signs (statement digest, ciphertext digest) with Ed25519.  Protocol code only
sees Statement/Attestation/prove/verify, which is what a succinct proof system
would expose as well.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .ahe import AheParams, Ciphertext, EncRandomness, Plaintext, PublicKey, decode, encrypt_with

SCHEME_ID = "oracle-ed25519"
SIG_BYTES = 64
TOKEN_BYTES = SIG_BYTES + 32 + 32


@dataclass(frozen=True)
class Statement:
    round_t: int
    pk_digest: bytes
    S: float
    params_digest: bytes

    @cached_property
    def digest(self) -> bytes:
        return hashlib.sha256(b"statement" + struct.pack("<q", self.round_t) + self.pk_digest
                              + struct.pack("<d", self.S) + self.params_digest).digest()


@dataclass(frozen=True)
class Attestation:
    scheme: str
    token: bytes

    def __len__(self):
        return len(self.token)


@dataclass(frozen=True)
class Witness:
    plaintext: Plaintext
    randomness: EncRandomness


def derive_signing_key(seed: bytes, label: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed + b"|" + label).digest())


def public_bytes(key: Ed25519PublicKey) -> bytes:
    return key.public_bytes(Encoding.Raw, PublicFormat.Raw)


class Authority:
    """Holds the signing key plus what it needs to re-check witnesses."""

    def __init__(self, seed: bytes, pk: PublicKey, params: AheParams, scale: float):
        self._key = derive_signing_key(seed, b"attestation-authority")
        # cheaters receive signatures under this key, which never verify
        self._wrong_key = derive_signing_key(seed, b"attestation-reject")
        self.public_key = self._key.public_key()
        self.pk = pk
        self.params = params
        self.scale = scale

    def statement(self, round_t: int, bound: float) -> Statement:
        return Statement(round_t, self.pk.digest, bound, self.params.digest)

    def witness_ok(self, stmt: Statement, ct: Ciphertext, witness: Witness) -> bool:
        pt = witness.plaintext
        if stmt.pk_digest != self.pk.digest or stmt.params_digest != self.params.digest:
            return False
        if pt.round_t != stmt.round_t:
            return False
        values = decode(pt, self.scale, t_plain=self.params.t_plain)
        if not float(np.linalg.norm(values)) <= stmt.S:
            return False
        again = encrypt_with(self.pk, pt, self.params, witness.randomness)
        return ct.adds_count == 1 and again.c1 == ct.c1 and again.c2 == ct.c2

    def sign(self, stmt: Statement, ct: Ciphertext, honest: bool) -> Attestation:
        body = stmt.digest + ct.digest
        key = self._key if honest else self._wrong_key
        return Attestation(SCHEME_ID, key.sign(body) + body)


def prove(stmt: Statement, ct: Ciphertext, witness: Witness, authority: Authority) -> Attestation:
    return authority.sign(stmt, ct, authority.witness_ok(stmt, ct, witness))


def verify(stmt: Statement, ct: Ciphertext, att: Attestation, authority_key: Ed25519PublicKey) -> bool:
    tok = att.token
    if att.scheme != SCHEME_ID or len(tok) != TOKEN_BYTES:
        return False
    body = tok[SIG_BYTES:]
    if body != stmt.digest + ct.digest:
        return False
    try:
        authority_key.verify(tok[:SIG_BYTES], body)
    except InvalidSignature:
        return False
    return True


def quantize_toward_zero(update, scale: float) -> np.ndarray:
    """Snap to the fixed-point grid without increasing any entry's magnitude (keeps norm <= S)."""
    return np.trunc(np.asarray(update, dtype=float) * scale) / scale


def noise_share_bound(std: float, dim: int) -> float:
    """L2 bound attested for a Gaussian noise share: std * (sqrt(dim) + 10)."""
    return std * (math.sqrt(dim) + 10)
