"""Append-only bulletin board with Ed25519-signed entries and per-kind quorum rules."""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from .errors import ParameterError, ProtocolError

KINDS = ("key-certificate", "dp-certificate", "commit-root", "ms-root", "pit-point", "beacon",
         "committee-roster", "root-ciphertext")


def signing_digest(round_t: int, kind: str, payload: bytes) -> bytes:
    return hashlib.sha256(struct.pack("<q", round_t) + kind.encode() + b"\x00" + payload).digest()


def sign(key: Ed25519PrivateKey, round_t: int, kind: str, payload: bytes) -> bytes:
    return key.sign(signing_digest(round_t, kind, payload))


@dataclass(frozen=True)
class BoardEntry:
    index: int
    round_t: int
    kind: str
    payload: bytes
    signers: tuple[bytes, ...]
    sigs: tuple[bytes, ...]

    def to_bytes(self) -> bytes:
        kind = self.kind.encode()
        parts = [struct.pack("<qqH", self.index, self.round_t, len(kind)), kind,
                 struct.pack("<I", len(self.payload)), self.payload, struct.pack("<I", len(self.sigs))]
        for pk, sig in zip(self.signers, self.sigs):
            parts += [pk, sig]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BoardEntry":
        index, round_t, klen = struct.unpack_from("<qqH", data, 0)
        off = 18
        kind = data[off:off + klen].decode()
        off += klen
        (plen,) = struct.unpack_from("<I", data, off)
        off += 4
        payload = data[off:off + plen]
        off += plen
        (ns,) = struct.unpack_from("<I", data, off)
        off += 4
        signers, sigs = [], []
        for _ in range(ns):
            signers.append(data[off:off + 32])
            sigs.append(data[off + 32:off + 96])
            off += 96
        return cls(index, round_t, kind, bytes(payload), tuple(signers), tuple(sigs))

    def to_json(self) -> dict:
        return {"index": self.index, "round": self.round_t, "kind": self.kind,
                "payload_sha256": hashlib.sha256(self.payload).hexdigest(),
                "payload_bytes": len(self.payload),
                "signers": [pk.hex() for pk in self.signers]}


@dataclass(frozen=True)
class QuorumRule:
    """At least ``min_signers`` distinct valid signatures from ``roster`` (any key if roster is None)."""

    min_signers: int
    roster: frozenset[bytes] | None = None

    @classmethod
    def more_than(cls, A: int, roster: Iterable[bytes] | None = None) -> "QuorumRule":
        return cls(A + 1, None if roster is None else frozenset(roster))


class Board:
    def __init__(self):
        self._entries: list[BoardEntry] = []
        self._chain: list[bytes] = [bytes(32)]

    def __len__(self):
        return len(self._entries)

    def append(self, round_t: int, kind: str, payload: bytes,
               sigs: Sequence[tuple[bytes, bytes]], rule: QuorumRule) -> int:
        """Append after checking every signature and the quorum; returns the new index."""
        if kind not in KINDS:
            raise ParameterError(f"unknown entry kind {kind!r}")
        digest = signing_digest(round_t, kind, payload)
        signers = []
        for pk, sig in sigs:
            if rule.roster is not None and pk not in rule.roster:
                raise ProtocolError(f"{kind}: signer {pk.hex()[:8]} is not on the roster")
            try:
                Ed25519PublicKey.from_public_bytes(pk).verify(sig, digest)
            except (InvalidSignature, ValueError):
                raise ProtocolError(f"{kind}: bad signature from {pk.hex()[:8]}") from None
            signers.append(pk)
        if len(set(signers)) < rule.min_signers:
            raise ProtocolError(f"{kind}: {len(set(signers))} signers, quorum needs {rule.min_signers}")
        entry = BoardEntry(len(self._entries), round_t, kind, bytes(payload),
                           tuple(pk for pk, _ in sigs), tuple(sig for _, sig in sigs))
        self._entries.append(entry)
        self._chain.append(hashlib.sha256(self._chain[-1] + entry.to_bytes()).digest())
        return entry.index

    def read(self, start: int = 0, stop: int | None = None) -> list[BoardEntry]:
        stop = len(self._entries) if stop is None else stop
        if not 0 <= start <= stop <= len(self._entries):
            raise IndexError(f"range [{start}, {stop}) outside log of length {len(self._entries)}")
        return self._entries[start:stop]

    def latest(self, kind: str, round_t: int | None = None) -> BoardEntry | None:
        for e in reversed(self._entries):
            if e.kind == kind and (round_t is None or e.round_t == round_t):
                return e
        return None

    def entries_of(self, kind: str, round_t: int | None = None) -> list[BoardEntry]:
        return [e for e in self._entries if e.kind == kind and (round_t is None or e.round_t == round_t)]

    def digest(self, length: int | None = None) -> bytes:
        """Hash chain over the first ``length`` entries; a prefix's digest never changes."""
        return self._chain[len(self._entries) if length is None else length]

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            for e in self._entries:
                blob = e.to_bytes()
                fh.write(struct.pack("<I", len(blob)) + blob)

    @classmethod
    def load(cls, path: str | Path) -> "Board":
        data = Path(path).read_bytes()
        board = cls()
        off = 0
        while off < len(data):
            (n,) = struct.unpack_from("<I", data, off)
            entry = BoardEntry.from_bytes(data[off + 4:off + 4 + n])
            board._entries.append(entry)
            board._chain.append(hashlib.sha256(board._chain[-1] + entry.to_bytes()).digest())
            off += 4 + n
        return board

    def dump_json(self) -> str:
        return "\n".join(json.dumps(e.to_json(), sort_keys=True) for e in self._entries)


def signatures(keys: Mapping[bytes, Ed25519PrivateKey], round_t: int, kind: str,
               payload: bytes) -> list[tuple[bytes, bytes]]:
    digest = signing_digest(round_t, kind, payload)
    return [(pk, key.sign(digest)) for pk, key in keys.items()]
