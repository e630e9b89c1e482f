"""Commit, add and verify: input commitments, commit trees, summation trees and verifier checks.

Canonical summation-tree shape: level 0 holds the M' leaves sorted by device
id; level L+1 pairs up level L left to right and an unpaired last vertex is
promoted with a single child (its value equals the child's).  Vertices are
numbered level by level, leaves first, and that flat order is the leaf order
of the vertex Merkle tree.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .ahe import Ciphertext, ct_add, ct_sum, num_ciphertexts
from .attest import Attestation, TOKEN_BYTES
from .errors import ParameterError, ProtocolError
from .merkle import MerklePath, MerkleTree, leaf_hash, verify_path
from .ring import ring_eval

NONCE_BYTES = 16
EVAL_BYTES = 32  # two field elements of 16 bytes

SORT_ORDER = "sort-order"
COMMITMENT_MISMATCH = "commitment-mismatch"
COMMITMENT_ABSENT = "commitment-absent"
ATTESTATION_INVALID = "attestation-invalid"
MEMBERSHIP_INVALID = "membership-invalid"
COUNT_EXCEEDED = "count-exceeded"
SUM_MISMATCH = "sum-mismatch"
ROOT_EVAL_MISMATCH = "root-eval-mismatch"
AGGREGATOR = b"aggregator"


def commit_digest(nonce: bytes, ct: Ciphertext, pk: bytes) -> bytes:
    return hashlib.sha256(bytes(nonce) + ct.wire + bytes(pk)).digest()


def make_commitment(pk: bytes, ct: Ciphertext, rng: np.random.Generator) -> tuple[bytes, bytes]:
    nonce = rng.bytes(NONCE_BYTES)
    return nonce, commit_digest(nonce, ct, pk)


@dataclass(frozen=True)
class InputCommit:
    pk: bytes
    digests: tuple[bytes, ...]


class CommitTree:
    """MC_j: Merkle tree over (pk, t_ij) pairs sorted by pk."""

    def __init__(self, entries: Iterable[tuple[bytes, bytes]]):
        entries = sorted(entries)
        pks = [pk for pk, _ in entries]
        if len(set(pks)) != len(pks):
            raise ProtocolError("duplicate device id in commit tree")
        self.entries: list[tuple[bytes, bytes]] = entries
        self.position = {pk: i for i, pk in enumerate(pks)}
        self.merkle = MerkleTree.from_data([pk + t for pk, t in entries])

    @property
    def root(self) -> bytes:
        return self.merkle.root

    def __len__(self):
        return len(self.entries)

    def proof(self, i: int) -> tuple[bytes, bytes, MerklePath]:
        pk, t = self.entries[i]
        return pk, t, self.merkle.path(i)


def build_commit_tree(entries: Iterable[tuple[bytes, bytes]]) -> CommitTree:
    return CommitTree(entries)


class LeafRecord:
    """(pk, ciphertext, nonce, attestation), or (pk, bottom) when ``ct`` is None."""

    __slots__ = ("pk", "ct", "nonce", "attestation", "__dict__")

    def __init__(self, pk: bytes, ct: Ciphertext | None = None, nonce: bytes = b"",
                 attestation: Attestation | None = None):
        self.pk = bytes(pk)
        self.ct = ct
        self.nonce = bytes(nonce)
        self.attestation = attestation

    @property
    def is_bottom(self) -> bool:
        return self.ct is None

    @cached_property
    def wire(self) -> bytes:
        if self.ct is None:
            return b"\x00" + self.pk
        return b"\x01" + self.pk + self.nonce + self.ct.wire + self.attestation.token

    @cached_property
    def vertex_digest(self) -> bytes:
        return leaf_hash(self.wire)

    @cached_property
    def commitment(self) -> bytes | None:
        return None if self.ct is None else commit_digest(self.nonce, self.ct, self.pk)

    def evaluation(self, r: int) -> tuple[int, int]:
        if self.ct is None:
            return (0, 0)
        return ct_evaluation(self.ct, r)

    @property
    def num_bytes(self) -> int:
        if self.ct is None:
            return 1 + len(self.pk)
        return 1 + len(self.pk) + len(self.nonce) + len(self.ct.wire) + len(self.attestation.token)

    def __repr__(self):
        return f"LeafRecord(pk={self.pk.hex()[:8]}, {'bottom' if self.ct is None else 'ct'})"


def ct_evaluation(ct: Ciphertext, r: int) -> tuple[int, int]:
    """(c1(r), c2(r)), memoised on the ciphertext object."""
    memo = ct.__dict__.setdefault("_evals", {})
    hit = memo.get(r)
    if hit is None:
        p = ct.c1.params
        hit = memo[r] = (ring_eval(ct.c1, r, p), ring_eval(ct.c2, r, p))
    return hit


def level_sizes(num_leaves: int) -> list[int]:
    sizes = [num_leaves]
    while sizes[-1] > 1:
        sizes.append((sizes[-1] + 1) // 2)
    return sizes


def _eval_bytes(pair: tuple[int, int]) -> bytes:
    return pair[0].to_bytes(16, "little") + pair[1].to_bytes(16, "little")


class SummationTree:
    """ST_j and its vertex Merkle tree MS_j.

    With ``pit`` the non-leaf vertices store evaluation pairs (c1(r), c2(r)); otherwise
    they store full ciphertexts.  ``overrides`` maps (level, index) to a replacement
    vertex value and ``root_override`` replaces the published root ciphertext; both
    exist for adversary injection only.
    """

    def __init__(self, j: int, leaves: Sequence[LeafRecord], r: int, pit: bool = True,
                 overrides: Mapping[tuple[int, int], object] | None = None,
                 root_override: Ciphertext | None = None, template: Ciphertext | None = None):
        if not leaves:
            raise ProtocolError("summation tree needs at least one leaf")
        self.j = j
        self.r = r
        self.pit = pit
        self.leaves = list(leaves)
        self.sizes = level_sizes(len(leaves))
        self.offsets = [0]
        for n in self.sizes[:-1]:
            self.offsets.append(self.offsets[-1] + n)
        overrides = dict(overrides or {})
        zero = template if template is not None else next(
            (rec.ct for rec in leaves if rec.ct is not None), None)
        self._zero_ct = None if zero is None else _zero_like(zero)

        self.values: list[list] = [[]]
        prev = [self._leaf_value(rec) for rec in self.leaves]
        for level in range(1, len(self.sizes)):
            cur = []
            for idx in range(self.sizes[level]):
                kids = prev[2 * idx:2 * idx + 2]
                v = kids[0] if len(kids) == 1 else self._add(kids[0], kids[1])
                v = overrides.get((level, idx), v)
                cur.append(v)
            self.values.append(cur)
            prev = cur
        honest_root = ct_sum([rec.ct for rec in self.leaves if rec.ct is not None]) \
            if any(rec.ct is not None for rec in self.leaves) else self._zero_ct
        self.root_ct: Ciphertext = root_override if root_override is not None else honest_root
        self.merkle = MerkleTree(self._vertex_digests())

    def _leaf_value(self, rec: LeafRecord):
        if self.pit:
            return rec.evaluation(self.r)
        return rec.ct if rec.ct is not None else self._zero_ct

    def _add(self, a, b):
        if self.pit:
            q = self._modulus
            return ((a[0] + b[0]) % q, (a[1] + b[1]) % q)
        return ct_add(a, b)

    @cached_property
    def _modulus(self) -> int:
        for rec in self.leaves:
            if rec.ct is not None:
                return rec.ct.c1.params.modulus
        return 1 << 127

    def vertex_bytes(self, level: int, idx: int) -> bytes:
        v = self.values[level][idx]
        head = b"node" + self.j.to_bytes(8, "little") + level.to_bytes(4, "little") + idx.to_bytes(8, "little")
        return head + (_eval_bytes(v) if self.pit else v.wire)

    def _vertex_digests(self) -> list[bytes]:
        out = [rec.vertex_digest for rec in self.leaves]
        for level in range(1, len(self.sizes)):
            out.extend(leaf_hash(self.vertex_bytes(level, i)) for i in range(self.sizes[level]))
        return out

    @property
    def ms_root(self) -> bytes:
        return self.merkle.root

    @property
    def num_leaves(self) -> int:
        return self.sizes[0]

    @property
    def height(self) -> int:
        return len(self.sizes) - 1

    @property
    def root_vertex(self) -> tuple[int, int]:
        return (self.height, 0)

    def flat(self, level: int, idx: int) -> int:
        return self.offsets[level] + idx

    @cached_property
    def _nonleaves(self) -> list[tuple[int, int]]:
        return [(lv, i) for lv in range(1, len(self.sizes)) for i in range(self.sizes[lv])]

    def nonleaves(self) -> list[tuple[int, int]]:
        return self._nonleaves

    def children(self, level: int, idx: int) -> list[tuple[int, int]]:
        below = self.sizes[level - 1]
        return [(level - 1, c) for c in (2 * idx, 2 * idx + 1) if c < below]

    def value(self, level: int, idx: int):
        """Stored value; leaves are evaluated (or expanded) from their record on demand."""
        if level == 0:
            return self._leaf_value(self.leaves[idx])
        return self.values[level][idx]

    def vertex_digest(self, level: int, idx: int) -> bytes:
        return self.merkle.leaves[self.flat(level, idx)]

    def path(self, level: int, idx: int) -> MerklePath:
        return self.merkle.path(self.flat(level, idx))

    @cached_property
    def _index(self) -> dict:
        out = {}
        for i, rec in enumerate(self.leaves):
            out.setdefault(rec.pk, i)
        return out

    def position_of(self, pk: bytes) -> int | None:
        return self._index.get(pk)


def _zero_like(ct: Ciphertext) -> Ciphertext:
    from .ring import RingPoly
    z = RingPoly.zero(ct.c1.params)
    return Ciphertext(z, z, ct.round_tag, 1, ct.t_plain)


@dataclass
class Forest:
    trees: list[SummationTree]
    commit_trees: list[CommitTree]
    r: int

    @property
    def root_cts(self) -> list[Ciphertext]:
        return [t.root_ct for t in self.trees]

    @property
    def num_leaves(self) -> int:
        return self.trees[0].num_leaves


def build_summation_forest(leaf_records: Sequence[Sequence[LeafRecord]], r: int,
                           commit_trees: Sequence[CommitTree], M_max: int, pit: bool = True,
                           tamper: Mapping[int, dict] | None = None) -> Forest:
    """One tree per ciphertext index j from the (M' x l) record matrix (row = device).

    ``tamper`` maps j to keyword overrides for SummationTree (adversary use).
    """
    if not leaf_records:
        raise ProtocolError("no leaves")
    if len(leaf_records) > M_max:
        raise ProtocolError(f"leaf count {len(leaf_records)} exceeds M_max={M_max}")
    rows = sorted(leaf_records, key=lambda row: row[0].pk)
    ell = len(rows[0])
    tamper = tamper or {}
    trees = [SummationTree(j, [row[j] for row in rows], r, pit, **tamper.get(j, {}))
             for j in range(ell)]
    return Forest(trees, list(commit_trees), r)


def select_trees(q: float, ell: int, rng) -> list[int]:
    """Each tree independently with probability q (``rng`` may be a numpy Generator or a stream)."""
    if q >= 1:
        return list(range(ell))
    if q <= 0:
        return []
    return [j for j in range(ell) if rng.random() < q]


def num_trees(num_params: int, degree: int) -> int:
    return num_ciphertexts(num_params, degree)


# -- verifier side ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    offender: bytes
    tree: int = -1
    position: tuple = ()


@dataclass(frozen=True)
class VerifyResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


@dataclass
class VerifierContext:
    """Everything a verifier trusts: board-published roots plus the attestation check."""

    round_t: int
    mc_roots: Sequence[bytes]
    ms_roots: Sequence[bytes]
    root_cts: Sequence[Ciphertext]
    r: int
    M_max: int
    attest_ok: Callable[[bytes, Ciphertext, Attestation], bool]


class TreeAudit:
    """Memoised verifier checks against one served tree.

    A check's outcome depends only on the served data and the published roots,
    so each leaf and vertex is checked once per tree and every verifier whose
    window or picks cover it reuses the result.  If the served vertex tree
    rebuilds to the published root, every membership path cut from it verifies,
    and the per-path hashing is skipped.
    """

    def __init__(self, tree: SummationTree, commit_tree: CommitTree, ctx: VerifierContext):
        self.tree = tree
        self.commit_tree = commit_tree
        self.ctx = ctx
        j = tree.j
        self.ms_root = ctx.ms_roots[j]
        self.mc_root = ctx.mc_roots[j]
        self.ms_consistent = tree.merkle.root == self.ms_root
        self.mc_consistent = commit_tree.root == self.mc_root
        self._leaf: dict[int, tuple[Violation, ...]] = {}
        self._node: dict[tuple[int, int], tuple[Violation, ...]] = {}

    def _member(self, level: int, idx: int) -> bool:
        if self.ms_consistent:
            return True
        t = self.tree
        return verify_path(t.vertex_digest(level, idx), t.path(level, idx), self.ms_root)

    def leaf(self, i: int) -> tuple[Violation, ...]:
        """Checks run in order and stop at the first failure."""
        hit = self._leaf.get(i)
        if hit is None:
            v = self._leaf_violation(i)
            hit = self._leaf[i] = () if v is None else (v,)
        return hit

    def _leaf_violation(self, i: int) -> Violation | None:
        t, j = self.tree, self.tree.j
        rec = t.leaves[i]
        pos = (0, i)
        if i + 1 < t.num_leaves and not rec.pk < t.leaves[i + 1].pk:
            return Violation(SORT_ORDER, AGGREGATOR, j, pos)
        if not self._member(0, i):
            return Violation(MEMBERSHIP_INVALID, AGGREGATOR, j, pos)
        if rec.is_bottom:
            return None
        ok_entry = i < len(self.commit_tree)
        if ok_entry:
            pk, digest, path = self.commit_tree.proof(i)
            ok_entry = pk == rec.pk and (self.mc_consistent or verify_path(
                leaf_hash(pk + digest), path, self.mc_root))
        if not ok_entry:
            return Violation(COMMITMENT_ABSENT, rec.pk, j, pos)
        if rec.commitment != digest:
            return Violation(COMMITMENT_MISMATCH, rec.pk, j, pos)
        if not self.ctx.attest_ok(rec.pk, rec.ct, rec.attestation):
            return Violation(ATTESTATION_INVALID, rec.pk, j, pos)
        return None

    def nonleaf(self, level: int, idx: int) -> tuple[Violation, ...]:
        key = (level, idx)
        hit = self._node.get(key)
        if hit is not None:
            return hit
        t, j = self.tree, self.tree.j
        out = []
        kids = t.children(level, idx)
        if not all(self._member(*v) for v in [key, *kids]):
            out.append(Violation(MEMBERSHIP_INVALID, AGGREGATOR, j, key))
        got = t.value(level, idx)
        vals = [t.value(*k) for k in kids]
        if t.pit:
            q = self.ctx.root_cts[j].c1.params.modulus
            want = (sum(v[0] for v in vals) % q, sum(v[1] for v in vals) % q)
        else:
            want = vals[0] if len(vals) == 1 else ct_add(vals[0], vals[1])
        if not _same_value(got, want, t.pit):
            out.append(Violation(SUM_MISMATCH, AGGREGATOR, j, key))
        if key == t.root_vertex:
            out.extend(self.root())
        res = self._node[key] = tuple(out)
        return res

    def root(self) -> tuple[Violation, ...]:
        """Published root ciphertext against the stored root vertex."""
        t, j = self.tree, self.tree.j
        ct = self.ctx.root_cts[j]
        stored = t.value(*t.root_vertex)
        if t.pit:
            p = ct.c1.params
            ok = stored == (ring_eval(ct.c1, self.ctx.r, p), ring_eval(ct.c2, self.ctx.r, p))
        else:
            ok = _same_value(stored, ct, False)
        return () if ok else (Violation(ROOT_EVAL_MISMATCH, AGGREGATOR, j, t.root_vertex),)

    def count(self) -> tuple[Violation, ...]:
        if self.tree.num_leaves > self.ctx.M_max:
            return (Violation(COUNT_EXCEEDED, AGGREGATOR, self.tree.j, ()),)
        return ()


def _same_value(a, b, pit: bool) -> bool:
    if pit:
        return tuple(a) == tuple(b)
    return a.c1 == b.c1 and a.c2 == b.c2


def window(v_init: int, s: int, m: int) -> list[int]:
    return [(v_init + k) % m for k in range(min(s, m))]


def check_leaves(audit: TreeAudit, v_init: int, s: int) -> VerifyResult:
    """Steps 8 and 10: leaf count, then s consecutive leaves starting at v_init."""
    m = audit.tree.num_leaves
    if not 0 <= v_init < m:
        raise ParameterError("v_init out of range")
    out = list(audit.count())
    if out:
        return VerifyResult(tuple(out))
    for i in window(v_init, s, m):
        out.extend(audit.leaf(i))
    return VerifyResult(tuple(out))


def check_nonleaves(audit: TreeAudit, picks: Iterable[tuple[int, int]]) -> VerifyResult:
    out = []
    for lv, idx in picks:
        if lv < 1:
            raise ParameterError("picks must be non-leaf vertices")
        out.extend(audit.nonleaf(lv, idx))
    return VerifyResult(tuple(out))


def check_own_leaf(tree: SummationTree, ms_root: bytes, record: LeafRecord) -> VerifyResult:
    """A contributing device checks that its exact record sits in MS_j."""
    pos = tree.position_of(record.pk)
    ok = pos is not None and tree.leaves[pos].vertex_digest == record.vertex_digest
    if ok and tree.merkle.root != ms_root:
        # a tree that rebuilds to the published root yields valid paths for all its leaves
        ok = verify_path(record.vertex_digest, tree.path(0, pos), ms_root)
    return VerifyResult(() if ok else (Violation(MEMBERSHIP_INVALID, AGGREGATOR, tree.j, ()),))


class VerifierStream:
    """Deterministic per-verifier randomness: SHA-256 in counter mode, seeded by (key, pk, j).

    The first draws are the tree-selection coin (8 bytes) and v_init (16 bytes).
    """

    def __init__(self, key: bytes, pk: bytes, j: int, skip: int = 0):
        self._seed = hashlib.sha256(key + pk + j.to_bytes(8, "little")).digest()
        self._ctr = 0
        self._buf = b""
        if skip:
            self._take(skip)

    def _take(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._buf += hashlib.sha256(self._seed + self._ctr.to_bytes(8, "little")).digest()
            self._ctr += 1
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def random(self) -> float:
        return int.from_bytes(self._take(8), "little") / float(1 << 64)

    def below(self, n: int) -> int:
        if n <= 0:
            raise ParameterError("empty range")
        # 128-bit draw keeps the modulo bias below 2^-100 for any realistic n
        return int.from_bytes(self._take(16), "little") % n


def pick_nonleaves(tree: SummationTree, leaf_window: Sequence[int], s: int,
                   stream: VerifierStream) -> list[tuple[int, int]]:
    """Parents of the fetched leaves (up to s/2 of them), topped up with random non-leaves."""
    if tree.height == 0:
        return []
    picks: list[tuple[int, int]] = []
    for i in leaf_window:
        if len(picks) >= s // 2:
            break
        p = (1, i // 2)
        if p not in picks:
            picks.append(p)
    nonleaves = tree.nonleaves()
    want = min(s, len(nonleaves))
    while len(picks) < want:
        v = nonleaves[stream.below(len(nonleaves))]
        if v not in picks:
            picks.append(v)
    return picks


@dataclass(frozen=True)
class Detection:
    kind: str
    offender: bytes
    verifier: bytes
    tree: int
    position: tuple


@dataclass
class FanOutResult:
    detections: list[Detection] = field(default_factory=list)
    trees_checked: int = 0
    leaves_fetched: int = 0
    nonleaf_picks: int = 0
    nonleaf_vertices: int = 0
    leaf_children: int = 0
    picks_by_level: dict = field(default_factory=dict)


def _first_draws(key: bytes, verifiers: Sequence[bytes], j: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Selection coins and v_init for every verifier, identical to VerifierStream's first draws."""
    jb = j.to_bytes(8, "little")
    zero = (0).to_bytes(8, "little")
    sha = hashlib.sha256
    coins = np.empty(len(verifiers))
    starts = np.empty(len(verifiers), dtype=np.int64)
    scale = float(1 << 64)
    for k, pk in enumerate(verifiers):
        b = sha(sha(key + pk + jb).digest() + zero).digest()
        coins[k] = int.from_bytes(b[:8], "little") / scale
        starts[k] = int.from_bytes(b[8:24], "little") % m
    return coins, starts


def fan_out(audits: Sequence[TreeAudit], verifiers: Sequence[bytes], s: int, q_select: float,
            stream_key: bytes, with_costs: bool = True) -> FanOutResult:
    """Every verifier picks each tree with probability q_select and runs steps 8, 10 and 11 on it.

    Verifiers are processed in id order and detections are de-duplicated per
    (violation kind, offender), keeping the first verifier that saw it.  Check
    outcomes come from the audits' memo tables, so the result is the same as
    running every verifier independently.
    """
    res = FanOutResult()
    verifiers = sorted(verifiers)
    seen: dict[tuple[str, bytes], Detection] = {}

    def note(v: Violation, who: bytes):
        key = (v.kind, v.offender)
        if key not in seen:
            seen[key] = Detection(v.kind, v.offender, who, v.tree, v.position)

    for audit in audits:
        tree = audit.tree
        j, m = tree.j, tree.num_leaves
        coins, starts = _first_draws(stream_key, verifiers, j, m)
        chosen = np.flatnonzero(coins < q_select) if q_select < 1 else np.arange(len(verifiers))
        if chosen.size == 0:
            continue
        res.trees_checked += int(chosen.size)
        w = min(s, m)
        res.leaves_fetched += int(chosen.size) * w
        counted = audit.count()
        if counted:
            for v in counted:
                note(v, verifiers[chosen[0]])
            continue
        v0 = starts[chosen]
        covered = np.unique((v0[:, None] + np.arange(w)[None, :]) % m)
        for b in covered:
            found = audit.leaf(int(b))
            if found:
                hits = chosen[((int(b) - v0) % m) < w]
                for v in found:
                    note(v, verifiers[hits[0]])
        bad_nodes = {key: audit.nonleaf(*key) for key in tree.nonleaves()}
        bad_nodes = {k: v for k, v in bad_nodes.items() if v}
        if not (bad_nodes or with_costs):
            continue
        pending = set(bad_nodes)
        for k in chosen:
            pk = verifiers[k]
            if not with_costs and not pending:
                break
            stream = VerifierStream(stream_key, pk, j, skip=24)
            picks = pick_nonleaves(tree, window(int(starts[k]), s, m), s, stream)
            if with_costs:
                res.nonleaf_picks += len(picks)
                for lv, idx in picks:
                    res.picks_by_level[lv] = res.picks_by_level.get(lv, 0) + 1
                    kids = tree.children(lv, idx)
                    res.nonleaf_vertices += 1 + sum(1 for c in kids if c[0] > 0)
                    res.leaf_children += sum(1 for c in kids if c[0] == 0)
            for key in picks:
                if key in bad_nodes:
                    for v in bad_nodes[key]:
                        note(v, pk)
                    pending.discard(key)
    res.detections = sorted(seen.values(), key=lambda d: (d.kind, d.offender))
    return res


# -- detection and Sybil bounds ---------------------------------------------------------------

def detection_miss_prob(q_select: float, s: int, M: int, f: float, W: int) -> float:
    """(1 - q s / M')^{(1 - f) W}: no honest verifier's window covers a given leaf."""
    return (1 - q_select * min(s, M) / M) ** ((1 - f) * W)


def detection_miss_bound(f: float, s: int) -> float:
    return math.exp(-(1 - f) * s)


def simulate_detection(W: int, f: float, s: int, q_select: float, M: int, trials: int,
                       rng: np.random.Generator, chunk: int = 200) -> float:
    """Monte Carlo miss rate for one tampered leaf against (1 - f) W honest verifiers."""
    honest = int(round((1 - f) * W))
    misses = 0
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        selected = rng.random((b, honest)) < q_select
        v_init = rng.integers(0, M, size=(b, honest))
        # tampered leaf at position 0 is covered iff (0 - v_init) mod M < s
        covered = ((-v_init) % M) < s
        misses += int(np.sum(~np.any(selected & covered, axis=1)))
        done += b
    return misses / trials


def sampling_concentration(k: float, qW: float) -> float:
    """(e^{k-1} / k^k)^{qW}, the Chernoff tail for M_tot falling below k q W."""
    return math.exp(qW * ((k - 1) - k * math.log(k)))


@dataclass(frozen=True)
class LeafBounds:
    M_prime: int
    M_max: int
    W_max: int
    W_min: int

    @property
    def ok(self) -> bool:
        return self.M_prime <= self.M_max


def m_max(q: float, W_max: int, extra: int = 0) -> int:
    """ceil(q W_max) sampled devices plus ``extra`` unsampled contributors (noise committee)."""
    return math.ceil(q * W_max) + extra


def nonleaf_bytes(pit: bool, degree: int) -> int:
    return EVAL_BYTES if pit else 2 * degree * 16


def leaf_record_bytes(degree: int) -> int:
    """Wire size of a full leaf record: tag, pk, nonce, ciphertext, attestation."""
    return 1 + 32 + NONCE_BYTES + 32 + 2 * (32 + 16 * degree) + TOKEN_BYTES
