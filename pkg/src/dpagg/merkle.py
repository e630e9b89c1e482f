"""Binary SHA-256 Merkle trees with index-carrying membership paths."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

EMPTY = bytes(32)
LEAF_PREFIX = b"\x00"


def leaf_hash(data: bytes) -> bytes:
    return hashlib.sha256(LEAF_PREFIX + data).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(left + right).digest()


@dataclass(frozen=True)
class MerklePath:
    index: int
    siblings: tuple[bytes, ...]

    @property
    def num_bytes(self) -> int:
        return 8 + 32 * len(self.siblings)


class MerkleTree:
    """Built over already-hashed leaves; an unpaired node is hashed with 32 zero bytes."""

    def __init__(self, leaves: Sequence[bytes]):
        self.levels: list[list[bytes]] = [list(leaves)]
        cur = self.levels[0]
        while len(cur) > 1 or (len(self.levels) == 1 and len(cur) == 1):
            nxt = []
            for k in range(0, len(cur), 2):
                right = cur[k + 1] if k + 1 < len(cur) else EMPTY
                nxt.append(node_hash(cur[k], right))
            self.levels.append(nxt)
            cur = nxt

    @classmethod
    def from_data(cls, items: Sequence[bytes]) -> "MerkleTree":
        return cls([leaf_hash(x) for x in items])

    @property
    def leaves(self) -> list[bytes]:
        return self.levels[0]

    def __len__(self):
        return len(self.levels[0])

    @property
    def root(self) -> bytes:
        if not self.levels[0]:
            return EMPTY
        return self.levels[-1][0]

    def path(self, index: int) -> MerklePath:
        if not 0 <= index < len(self):
            raise IndexError(f"leaf {index} out of range")
        sib = []
        k = index
        for level in self.levels[:-1]:
            mate = k ^ 1
            sib.append(level[mate] if mate < len(level) else EMPTY)
            k >>= 1
        return MerklePath(index, tuple(sib))


def root_from_path(leaf: bytes, path: MerklePath) -> bytes:
    h, k = leaf, path.index
    for s in path.siblings:
        h = node_hash(s, h) if k & 1 else node_hash(h, s)
        k >>= 1
    return h


def verify_path(leaf: bytes, path: MerklePath, root: bytes) -> bool:
    return root_from_path(leaf, path) == root
