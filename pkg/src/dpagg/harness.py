"""Deterministic round simulator: setup, generate, add, release, with scripted adversaries.

Everything random is drawn from streams keyed by (seed, label, ...), so a run
is a pure function of its configuration.  The single-process orchestrator
processes devices in id order.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import aggproto as ap
from . import attest, dpcore
from .ahe import (AheParams, Ciphertext, ct_add, check_smudging_headroom, combine_partials, decode,
                  encode, encrypt, keygen, partial_decrypt)
from .board import Board, QuorumRule, signatures
from .committee import CommitteeSpec, select_disjoint, union_failure_bound
from .config import BEHAVIOURS, WorldConfig
from .errors import ConfigError, DpaggError, ProtocolError
from .ring import RingParams, RingPoly
from .sharing import (DlogGroup, RandBeaconSession, ShareSet, beacon_commit, beacon_finalize,
                      lagrange_coeff, reshare, share)

log = logging.getLogger(__name__)

ROLES = ("generator", "verifier", "dp-noise", "master", "decryption", "aggregator")
OPS = ("ring_mul", "hash", "exp", "verify")
ROSTER_MISMATCH = "roster-mismatch"

EXPECTED = {
    "omit-noise-leaf": ap.MEMBERSHIP_INVALID,
    "modify-leaf-ct": ap.COMMITMENT_MISMATCH,
    "duplicate-input": ap.COMMITMENT_MISMATCH,
    "scalar-multiply-leaf": ap.COMMITMENT_MISMATCH,
    "replay-prev-round": ap.ATTESTATION_INVALID,
    "sybil-inflate": ap.COUNT_EXCEEDED,
    "corrupt-nonleaf-eval": ap.SUM_MISMATCH,
    "corrupt-root": ap.ROOT_EVAL_MISMATCH,
    "biased-committee-pick": ROSTER_MISMATCH,
}


# -- cost ledger ------------------------------------------------------------------------------

@dataclass
class RoleCost:
    bytes_up: int = 0
    bytes_down: int = 0
    ops: dict = field(default_factory=lambda: dict.fromkeys(OPS, 0))
    detail: dict = field(default_factory=dict)


class CostLedger:
    """Transfers are charged once: device-side parties pay for what they send and fetch;
    the aggregator only for what it posts to the board."""

    def __init__(self):
        self.roles = {r: RoleCost() for r in ROLES}

    def up(self, role: str, n: int, what: str | None = None):
        self.roles[role].bytes_up += int(n)
        if what:
            self._detail(role, what, n)

    def down(self, role: str, n: int, what: str | None = None):
        self.roles[role].bytes_down += int(n)
        if what:
            self._detail(role, what, n)

    def op(self, role: str, name: str, n: int = 1):
        ops = self.roles[role].ops
        ops[name] = ops.get(name, 0) + int(n)

    def count(self, role: str, what: str, n: int = 1):
        self._detail(role, what, n)

    def _detail(self, role, what, n):
        d = self.roles[role].detail
        d[what] = d.get(what, 0) + int(n)

    def snapshot(self) -> "LedgerSnapshot":
        return LedgerSnapshot(MappingProxyType({
            r: RoleSnapshot(c.bytes_up, c.bytes_down, MappingProxyType(dict(c.ops)),
                            MappingProxyType(dict(c.detail)))
            for r, c in self.roles.items()}))


@dataclass(frozen=True)
class RoleSnapshot:
    bytes_up: int
    bytes_down: int
    ops: Mapping[str, int]
    detail: Mapping[str, int]


@dataclass(frozen=True)
class LedgerSnapshot:
    roles: Mapping[str, RoleSnapshot]

    def __getitem__(self, role: str) -> RoleSnapshot:
        return self.roles[role]

    @property
    def is_zero(self) -> bool:
        return all(r.bytes_up == 0 and r.bytes_down == 0 and not any(r.ops.values()) and not r.detail
                   for r in self.roles.values())

    def per_nonleaf_vertex_bytes(self) -> float:
        d = self.roles["verifier"].detail
        n = d.get("nonleaf_vertices", 0)
        return d.get("nonleaf_vertex_bytes", 0) / n if n else 0.0

    def to_dict(self) -> dict:
        return {r: {"bytes_up": s.bytes_up, "bytes_down": s.bytes_down, "ops": dict(s.ops),
                    "detail": dict(s.detail)} for r, s in self.roles.items()}


# -- world ------------------------------------------------------------------------------------

@dataclass(frozen=True)
class AdversaryScript:
    behaviours: tuple[str, ...] = ()

    def __post_init__(self):
        for b in self.behaviours:
            if b not in BEHAVIOURS:
                raise ConfigError(f"adversary: unknown behaviour {b!r}")

    @property
    def expected(self) -> set[str]:
        return {EXPECTED[b] for b in self.behaviours}


@dataclass
class Contribution:
    pk: bytes
    role: str                      # "generator" or "dp-noise"
    real: np.ndarray               # clipped update or raw noise share, before quantisation
    quantized: np.ndarray          # what was encoded
    records: list                  # LeafRecord per ciphertext index
    bound: float                   # L2 bound in the attestation statement
    online: bool = True


@dataclass(frozen=True)
class Detection:
    kind: str
    offender: str
    verifier: str
    tree: int
    source: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "offender": self.offender, "verifier": self.verifier,
                "tree": self.tree, "source": self.source}


@dataclass
class RoundReport:
    round_t: int
    status: str
    detections: list
    expected: list
    decrypted_aggregate: np.ndarray | None
    oracle_aggregate: np.ndarray | None
    oracle_real: np.ndarray | None
    epsilon: float
    delta: float
    ledger: LedgerSnapshot
    info: dict = field(default_factory=dict)

    @property
    def detected_kinds(self) -> set[str]:
        return {d.kind for d in self.detections}

    @property
    def matches_oracle(self) -> bool | None:
        if self.decrypted_aggregate is None or self.oracle_aggregate is None:
            return None
        return bool(np.array_equal(self.decrypted_aggregate, self.oracle_aggregate))

    @property
    def undetected(self) -> list[str]:
        return sorted(set(self.expected) - self.detected_kinds)

    def to_json(self) -> dict:
        agg = self.decrypted_aggregate
        out = {
            "round": self.round_t,
            "status": self.status,
            "detections": [d.to_dict() for d in self.detections],
            "expected_violations": list(self.expected),
            "undetected": self.undetected,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "matches_oracle": self.matches_oracle,
            "ledger": self.ledger.to_dict(),
            "info": self.info,
        }
        if agg is not None:
            out["aggregate_sha256"] = hashlib.sha256(np.ascontiguousarray(agg).tobytes()).hexdigest()
            out["aggregate_head"] = [float(v) for v in agg[:8]]
            out["aggregate_l2"] = float(np.linalg.norm(agg))
        if agg is not None and self.oracle_real is not None:
            out["max_abs_error_vs_real"] = float(np.max(np.abs(agg - self.oracle_real)))
        return out


def _seed_bytes(seed: int) -> bytes:
    return hashlib.sha256(b"dpagg-world" + struct.pack("<q", seed)).digest()


class World:
    def __init__(self, cfg: WorldConfig):
        self.cfg = cfg
        self.seed = _seed_bytes(cfg.seed)
        a = cfg.ahe
        self.ring = RingParams(a.degree, a.modulus)
        self.ahe = AheParams.create(self.ring, a.t_plain, a.smudge_lambda)
        self.scale = a.scale
        self.group = DlogGroup.for_modulus(a.modulus)
        self.ell = cfg.num_trees
        comm = cfg.committees
        self.M_max = ap.m_max(cfg.q, cfg.W_max, comm["dp_noise"].C)
        self.smudge = check_smudging_headroom(self.ahe, comm["decryption"].C, self.M_max)
        self.specs = self._committee_specs()
        self.union_bound = union_failure_bound(self.specs)
        if cfg.union_bound_target is not None and self.union_bound > cfg.union_bound_target:
            raise ConfigError(f"committees: union failure bound {self.union_bound:.3g} exceeds "
                              f"union_bound_target {cfg.union_bound_target:.3g}")
        try:
            dpcore.epsilon_for(1, cfg.q, cfg.z, cfg.delta)
        except DpaggError as e:
            raise ConfigError(f"q, z: privacy accounting undefined ({e})") from None
        self.noise_plan = dpcore.NoisePlan(comm["dp_noise"].C, comm["dp_noise"].A,
                                           comm["dp_noise"].offline_allowance)

        self.device_keys = {}
        for i in range(cfg.W):
            key = attest.derive_signing_key(self.seed, b"device|%d" % i)
            self.device_keys[attest.public_bytes(key.public_key())] = key
        self.devices = sorted(self.device_keys)
        ranked = sorted(self.devices, key=lambda d: hashlib.sha256(self.seed + b"malicious" + d).digest())
        self.malicious = set(ranked[:int(round(cfg.f * cfg.W))])
        self.aggregator_key = attest.derive_signing_key(self.seed, b"aggregator")
        self.aggregator_pk = attest.public_bytes(self.aggregator_key.public_key())
        self.beacon_key = attest.derive_signing_key(self.seed, b"beacon")
        self.beacon_pk = attest.public_bytes(self.beacon_key.public_key())

        self.board = Board()
        self.accountant = dpcore.AccountantState(cfg.delta)
        self.dp = dpcore.DpConfig(cfg.q, cfg.z, cfg.S, cfg.W, cfg.delta, cfg.epsilon_budget)
        self.ledger = CostLedger()
        trng = self.rng("theta-true")
        self.theta_true = trng.normal(size=cfg.model_dim) / math.sqrt(cfg.model_dim)
        self.theta = np.zeros(cfg.model_dim)
        self.round_t = 0
        self.enc_pk = None
        self._sk = None  # oracle access for tests only; the protocol never reads it
        self.authority: attest.Authority | None = None
        self.master_members: list[bytes] = []
        self.master_shares: ShareSet | None = None
        self.records_by_round: dict[int, dict] = {}
        self._attest_cache: dict = {}
        self.last_state: RoundState | None = None

    def _committee_specs(self) -> list[CommitteeSpec]:
        c, f = self.cfg.committees, self.cfg.f
        specs = [CommitteeSpec(c["master"].C, c["master"].A, "master", max(f, 1e-12)),
                 CommitteeSpec(c["dp_noise"].C, c["dp_noise"].A, "dp_noise", max(f, 1e-12))]
        specs += [CommitteeSpec(c["decryption"].C, c["decryption"].A, "decryption", max(f, 1e-12), k)
                  for k in range(self.cfg.active_decryption_committees)]
        return specs

    def rng(self, label: str, *parts) -> np.random.Generator:
        h = hashlib.sha256(self.seed + label.encode())
        for p in parts:
            h.update(b"|" + (p if isinstance(p, bytes) else str(p).encode()))
        return np.random.default_rng(np.frombuffer(h.digest(), dtype="<u4").astype(np.uint32))

    def attest_ok(self, stmt: attest.Statement, ct: Ciphertext, att: attest.Attestation) -> bool:
        key = (stmt.digest, ct.digest, att.token)
        hit = self._attest_cache.get(key)
        if hit is None:
            hit = self._attest_cache[key] = attest.verify(stmt, ct, att, self.authority.public_key)
        return hit

    @property
    def secret_key(self):
        return self._sk


@dataclass
class RoundState:
    t: int
    beacon: bytes
    committees: dict
    posted_roster: bytes
    contributions: dict
    commits: dict
    r: int = 0
    honest_trees: dict = field(default_factory=dict)
    honest_audits: dict = field(default_factory=dict)
    commit_trees: list = field(default_factory=list)
    decryption_shares: list = field(default_factory=list)
    own_leaf_ok: dict = field(default_factory=dict)
    alt_cache: dict = field(default_factory=dict)
    honest_rows: dict = field(default_factory=dict)


def _roster_payload(committees: Mapping[str, Sequence[bytes]]) -> bytes:
    out = []
    for label in sorted(committees):
        members = committees[label]
        out.append(label.encode() + b"\x00" + struct.pack("<I", len(members)) + b"".join(members))
    return b"".join(out)


def _quorum_sigs(world: World, members: Sequence[bytes], A: int, round_t: int, kind: str,
                 payload: bytes) -> list:
    keys = {pk: world.device_keys[pk] for pk in members[:A + 1]}
    return signatures(keys, round_t, kind, payload)


def _post_by_committee(world: World, members, A, t, kind, payload, role="master"):
    sigs = _quorum_sigs(world, members, A, t, kind, payload)
    world.board.append(t, kind, payload, sigs, QuorumRule.more_than(A, members))
    world.ledger.up(role, len(payload) + 96 * len(sigs))


def _post_by_aggregator(world: World, t, kind, payload):
    sigs = signatures({world.aggregator_pk: world.aggregator_key}, t, kind, payload)
    world.board.append(t, kind, payload, sigs, QuorumRule(1, frozenset([world.aggregator_pk])))
    world.ledger.up("aggregator", len(payload) + 96)


# -- setup --------------------------------------------------------------------------------------

def _reshare_costs(world: World, old_a: int, new_c: int, new_a: int, role_from: str, role_to: str):
    n = world.ring.degree
    sub = n * 16
    comm = (new_a + 1) * n * world.group.element_bytes
    dealers = old_a + 1
    world.ledger.up(role_from, dealers * (new_c * sub + comm), "reshare")
    world.ledger.op(role_from, "exp", dealers * (new_a + 1) * n)
    world.ledger.down(role_to, new_c * dealers * (sub + comm), "reshare")
    world.ledger.op(role_to, "exp", new_c * (new_a + 3))


def _setup(world: World, t: int, script: AdversaryScript) -> RoundState:
    cfg = world.cfg
    comm = cfg.committees
    beacon = hashlib.sha256(world.seed + b"beacon" + struct.pack("<q", t)).digest()
    world.board.append(t, "beacon", beacon,
                       signatures({world.beacon_pk: world.beacon_key}, t, "beacon", beacon),
                       QuorumRule(1, frozenset([world.beacon_pk])))
    committees = select_disjoint(world.devices, beacon, world.specs)
    roster = dict(committees)
    if "biased-committee-pick" in script.behaviours:
        roster = _biased_roster(world, committees)
    payload = _roster_payload(roster)
    _post_by_aggregator(world, t, "committee-roster", payload)
    master = committees["master"]
    A_m = comm["master"].A

    eps = world.accountant.preview(cfg.q, cfg.z)
    theta_digest = hashlib.sha256(world.theta.tobytes()).digest()
    cert = theta_digest + struct.pack("<5d", cfg.q, cfg.z, cfg.S, eps, cfg.delta)
    _post_by_committee(world, master, A_m, t, "dp-certificate", cert)

    rng = world.rng("keys", t)
    if world.master_shares is None:
        pk, sk = keygen(world.ahe, rng)
        world.enc_pk, world._sk = pk, sk
        world.authority = attest.Authority(world.seed, pk, world.ahe, world.scale)
        world.master_shares = share(sk.s.limbs, comm["master"].C, A_m, world.group, rng)
        n = world.ring.degree
        world.ledger.up("master", comm["master"].C * n * 16 + (A_m + 1) * n * world.group.element_bytes,
                        "keygen")
        world.ledger.op("master", "exp", (A_m + 1) * n)
        world.ledger.op("master", "ring_mul", 1)
    else:
        prev = world.master_shares
        world.master_shares = reshare(prev, range(1, prev.threshold + 2), comm["master"].C, A_m,
                                      world.group, rng)
        _reshare_costs(world, prev.threshold, comm["master"].C, A_m, "master", "master")
    world.master_members = master
    cert = world.enc_pk.digest + world.master_shares.feldman.transcript_digest
    _post_by_committee(world, master, A_m, t, "key-certificate", cert)

    dec = comm["decryption"]
    dshares = []
    for k in range(cfg.active_decryption_committees):
        ss = reshare(world.master_shares, range(1, A_m + 2), dec.C, dec.A, world.group,
                     world.rng("reshare-dec", t, k))
        _reshare_costs(world, A_m, dec.C, dec.A, "master", "decryption")
        dshares.append(ss)
    state = RoundState(t, beacon, committees, payload, {}, {})
    state.decryption_shares = dshares
    return state


def _biased_roster(world: World, committees: dict) -> dict:
    taken = {pk for members in committees.values() for pk in members}
    spare = [pk for pk in world.devices if pk in world.malicious and pk not in taken]
    biased = {k: list(v) for k, v in committees.items()}
    if spare:
        biased["dp_noise"][0] = spare[0]
    else:
        biased["dp_noise"] = biased["dp_noise"][1:] + biased["dp_noise"][:1]
    return biased


# -- generate -----------------------------------------------------------------------------------

def _split(vec: np.ndarray, ell: int, slots: int) -> list[np.ndarray]:
    padded = np.zeros(ell * slots)
    padded[:vec.size] = vec
    return [padded[j * slots:(j + 1) * slots] for j in range(ell)]


def _contribute(world: World, t: int, pk: bytes, role: str, real: np.ndarray, bound: float,
                online: bool) -> Contribution:
    rng = world.rng("encrypt", t, pk)
    quant = attest.quantize_toward_zero(real, world.scale)
    stmt = world.authority.statement(t, bound)
    records = []
    slots = world.ahe.slots
    for chunk in _split(quant, world.ell, slots):
        pt = encode(t, chunk, world.scale, world.ahe, k_max=world.M_max)
        ct, rand = encrypt(world.enc_pk, pt, world.ahe, rng)
        att = attest.prove(stmt, ct, attest.Witness(pt, rand), world.authority)
        nonce, _ = ap.make_commitment(pk, ct, rng)
        records.append(ap.LeafRecord(pk, ct, nonce, att))
    ledger_role = "generator" if role == "generator" else "dp-noise"
    world.ledger.down(ledger_role, 32 + 2 * world.ring.poly_bytes)  # beacon and public key
    world.ledger.op(ledger_role, "ring_mul", 2 * world.ell)
    world.ledger.op(ledger_role, "hash", world.ell)
    world.ledger.up(ledger_role, 32 * world.ell, "commitments")
    if online:
        world.ledger.up(ledger_role, sum(r.num_bytes for r in records), "ciphertexts")
    return Contribution(pk, role, real, quant, records, bound, online)


def _generate(world: World, st: RoundState) -> None:
    cfg = world.cfg
    t = st.t
    in_committee = {pk for members in st.committees.values() for pk in members}
    sampled = [pk for pk in world.devices
               if pk not in in_committee and dpcore.is_sampled(pk, st.beacon, cfg.q)]
    world.ledger.op("generator", "hash", len(sampled))
    for pk in sampled:
        data = dpcore.make_toy_dataset(world.theta_true, cfg.samples_per_device, world.rng("data", pk))
        delta = dpcore.local_update(world.theta, data, cfg.local_epochs, cfg.lr, cfg.S)
        online = pk in world.malicious or world.rng("offline", t, pk).random() >= cfg.offline_frac
        st.contributions[pk] = _contribute(world, t, pk, "generator", delta, cfg.S, online)
    std = dpcore.noise_share_std(world.noise_plan, world.dp.sigma)
    bound = attest.noise_share_bound(std, world.ahe.slots)
    for pk in st.committees["dp_noise"]:
        if pk in world.malicious:
            noise = np.zeros(cfg.model_dim)  # contributes nothing; honest shares compensate
        else:
            noise = dpcore.sample_noise_share(std, cfg.model_dim, world.rng("noise", t, pk))
        st.contributions[pk] = _contribute(world, t, pk, "dp-noise", noise, bound, True)
    for pk, c in st.contributions.items():
        st.commits[pk] = [rec.commitment for rec in c.records]


# -- add ----------------------------------------------------------------------------------------

@dataclass
class Tamper:
    """What one adversarial behaviour changes relative to the honest aggregation."""

    behaviour: str
    rows: dict = field(default_factory=dict)          # pk -> replacement records (per j)
    commits: dict = field(default_factory=dict)       # pk -> replacement/extra commitments
    tree_kwargs: dict = field(default_factory=dict)   # j -> SummationTree overrides
    colluders: set = field(default_factory=set)
    touched: set = field(default_factory=set)         # trees that differ from the honest ones
    roster: bytes | None = None
    applicable: bool = True


def _bottom_rows(st: RoundState, world: World) -> dict:
    """The honest aggregator's leaf rows: invalid or missing reveals become bottom."""
    rows = {}
    for pk, c in st.contributions.items():
        if not c.online:
            rows[pk] = [ap.LeafRecord(pk) for _ in range(world.ell)]
            continue
        stmt = world.authority.statement(st.t, c.bound)
        recs = []
        for rec, digest in zip(c.records, st.commits[pk]):
            ok = rec.commitment == digest and world.attest_ok(stmt, rec.ct, rec.attestation)
            recs.append(rec if ok else ap.LeafRecord(pk))
        rows[pk] = recs
    return rows


def _colluder(world: World, st: RoundState, rng: np.random.Generator) -> bytes:
    gens = [pk for pk, c in st.contributions.items() if c.role == "generator" and c.online]
    bad = [pk for pk in gens if pk in world.malicious]
    pool = bad or gens
    return pool[int(rng.integers(len(pool)))]


def _const_ct(template: Ciphertext, d1: int, d2: int) -> Ciphertext:
    p = template.c1.params
    return Ciphertext(RingPoly.monomial(0, p, d1), RingPoly.monomial(0, p, d2), template.round_tag,
                      1, template.t_plain)


def _alt_encryption(world: World, st: RoundState, pk: bytes, j: int) -> ap.LeafRecord:
    """A second well-formed, validly attested ciphertext the colluder never committed to."""
    key = (pk, j)
    if key not in st.alt_cache:
        c = st.contributions[pk]
        rng = world.rng("alt", st.t, pk, j)
        chunk = np.zeros(world.ahe.slots)
        chunk[int(rng.integers(chunk.size))] = min(c.bound, 1.0) * 0.5
        pt = encode(st.t, chunk, world.scale, world.ahe, k_max=world.M_max)
        ct, rand = encrypt(world.enc_pk, pt, world.ahe, rng)
        att = attest.prove(world.authority.statement(st.t, c.bound), ct, attest.Witness(pt, rand),
                           world.authority)
        st.alt_cache[key] = ap.LeafRecord(pk, ct, c.records[j].nonce, att)
    return st.alt_cache[key]


def make_tamper(world: World, st: RoundState, behaviour: str, rng: np.random.Generator,
                honest_rows: Mapping[bytes, list]) -> Tamper:
    tp = Tamper(behaviour)
    ell = world.ell
    j = int(rng.integers(ell))
    if behaviour == "biased-committee-pick":
        tp.roster = _roster_payload(_biased_roster(world, st.committees))
    elif behaviour == "omit-noise-leaf":
        honest_dp = [pk for pk in st.committees["dp_noise"] if pk not in world.malicious]
        victim = honest_dp[int(rng.integers(len(honest_dp)))]
        rows = list(honest_rows[victim])
        rows[j] = ap.LeafRecord(victim)
        tp.rows[victim] = rows
        tp.touched.add(j)
    elif behaviour in ("modify-leaf-ct", "duplicate-input", "scalar-multiply-leaf"):
        pk = _colluder(world, st, rng)
        tp.colluders.add(pk)
        rows = list(st.contributions[pk].records)
        if behaviour == "modify-leaf-ct":
            rows[j] = _alt_encryption(world, st, pk, j)
        elif behaviour == "duplicate-input":
            others = [o for o, c in st.contributions.items()
                      if o != pk and c.online and c.role == "generator"]
            src = st.contributions[others[int(rng.integers(len(others)))]].records[j]
            rows[j] = ap.LeafRecord(pk, src.ct, rows[j].nonce, src.attestation)
        else:
            k = int(rng.integers(2, 8))
            old = rows[j]
            rows[j] = ap.LeafRecord(pk, _scale_ct(old.ct, k), old.nonce, old.attestation)
        tp.rows[pk] = rows
        tp.touched.add(j)
    elif behaviour == "replay-prev-round":
        prev = world.records_by_round.get(st.t - 1)
        if not prev:
            tp.applicable = False
            return tp
        pk = _colluder(world, st, rng)
        tp.colluders.add(pk)
        donors = sorted(prev)
        old = prev[donors[int(rng.integers(len(donors)))]]
        rows, commits = [], []
        for jj in range(ell):
            nonce = rng.bytes(ap.NONCE_BYTES)
            rec = ap.LeafRecord(pk, old[jj].ct, nonce, old[jj].attestation)
            rows.append(rec)
            commits.append(rec.commitment)
        tp.rows[pk] = rows
        tp.commits[pk] = commits
        tp.touched.update(range(ell))
    elif behaviour == "sybil-inflate":
        m_now = len(st.contributions)
        extra = world.M_max - m_now + 1
        template = next(c for c in st.contributions.values() if c.role == "generator")
        fake_src = _alt_encryption(world, st, template.pk, 0)
        for _ in range(max(extra, 1)):
            fake = rng.bytes(32)
            recs = [ap.LeafRecord(fake, fake_src.ct, rng.bytes(ap.NONCE_BYTES), fake_src.attestation)
                    for _ in range(ell)]
            tp.rows[fake] = recs
            tp.commits[fake] = [r.commitment for r in recs]
            tp.colluders.add(fake)
        tp.touched.update(range(ell))
    elif behaviour in ("corrupt-nonleaf-eval", "corrupt-root"):
        honest = st.honest_trees[j]
        q = world.ring.modulus
        d1, d2 = int(rng.integers(1, 1 << 62)) % q, int(rng.integers(1, 1 << 62)) % q
        delta_ct = _const_ct(honest.root_ct, d1, d2)
        kw = {"root_override": ct_add(honest.root_ct, delta_ct)}
        if behaviour == "corrupt-nonleaf-eval" and honest.height >= 1:
            candidates = [v for v in honest.nonleaves() if v != honest.root_vertex] or honest.nonleaves()
            lv, idx = candidates[int(rng.integers(len(candidates)))]
            old = honest.values[lv][idx]
            new = ((old[0] + d1) % q, (old[1] + d2) % q) if honest.pit else ct_add(old, delta_ct)
            kw["overrides"] = {(lv, idx): new}
        tp.tree_kwargs[j] = kw
        tp.touched.add(j)
    else:
        raise ConfigError(f"unknown behaviour {behaviour!r}")
    return tp


def _scale_ct(ct: Ciphertext, k: int) -> Ciphertext:
    from .ahe import ct_scalar_mul
    return ct_scalar_mul(ct, k)


@dataclass
class AddOutcome:
    trees: list
    commit_trees: list
    detections: list
    fanout: ap.FanOutResult
    M_prime: int


def _merge_tamper(tampers: Sequence[Tamper]) -> Tamper:
    out = Tamper("+".join(t.behaviour for t in tampers))
    for tp in tampers:
        out.rows.update(tp.rows)
        out.commits.update(tp.commits)
        for j, kw in tp.tree_kwargs.items():
            out.tree_kwargs.setdefault(j, {}).update(kw)
        out.colluders |= tp.colluders
        out.touched |= tp.touched
        out.roster = tp.roster or out.roster
    return out


def aggregate_and_verify(world: World, st: RoundState, tamper: Tamper, stream_key: bytes,
                         with_costs: bool = False, post: bool = False) -> AddOutcome:
    """Build commit trees and the summation forest (as the possibly-tampering aggregator
    serves them), then run every honest party's check."""
    cfg = world.cfg
    t, ell = st.t, world.ell
    base_rows = st.honest_rows
    rows = dict(base_rows)
    rows.update(tamper.rows)
    commits = dict(st.commits)
    commits.update(tamper.commits)
    order = sorted(rows)
    M_prime = len(order)

    if tamper.commits:
        commit_trees = [ap.build_commit_tree((pk, commits[pk][j]) for pk in order) for j in range(ell)]
    else:
        commit_trees = st.commit_trees
    trees = []
    for j in range(ell):
        if j in tamper.touched or tamper.commits:
            tree = ap.SummationTree(j, [rows[pk][j] for pk in order], st.r, cfg.pit,
                                    **tamper.tree_kwargs.get(j, {}))
        else:
            tree = st.honest_trees[j]
        trees.append(tree)
    if post:
        for j in range(ell):
            _post_by_aggregator(world, t, "commit-root",
                                struct.pack("<qq", j, M_prime) + commit_trees[j].root)
        for j, tree in enumerate(trees):
            _post_by_aggregator(world, t, "ms-root", struct.pack("<qq", j, M_prime) + tree.ms_root)
            _post_by_aggregator(world, t, "root-ciphertext", struct.pack("<q", j) + tree.root_ct.wire)

    bound_for = {pk: c.bound for pk, c in st.contributions.items()}
    stmts: dict = {}

    def attest_ok(pk, ct, att):
        b = bound_for.get(pk, cfg.S)
        stmt = stmts.get(b)
        if stmt is None:
            stmt = stmts[b] = world.authority.statement(t, b)
        return world.attest_ok(stmt, ct, att)

    ctx = ap.VerifierContext(t, [c.root for c in commit_trees], [tr.ms_root for tr in trees],
                             [tr.root_ct for tr in trees], st.r, world.M_max, attest_ok)
    audits = []
    for j, tree in enumerate(trees):
        if tree is st.honest_trees[j] and commit_trees is st.commit_trees:
            audits.append(st.honest_audits[j])
        else:
            audits.append(ap.TreeAudit(tree, commit_trees[j], ctx))

    found: dict = {}

    def note(kind, offender, verifier, tree, source):
        key = (kind, offender)
        if key not in found:
            found[key] = Detection(kind, offender.hex() if offender != ap.AGGREGATOR else "aggregator",
                                   verifier.hex(), tree, source)

    honest = [pk for pk in world.devices if pk not in world.malicious and pk not in tamper.colluders]

    # every honest device recomputes sortition and compares with the posted roster
    posted = tamper.roster if tamper.roster is not None else _roster_payload(st.committees)
    if posted != _roster_payload(st.committees):
        note(ROSTER_MISMATCH, ap.AGGREGATOR, honest[0], -1, "sortition")

    # contributors check their own leaves (step 7 membership proofs)
    for j, tree in enumerate(trees):
        if tree is st.honest_trees[j] and j in st.own_leaf_ok:
            continue
        ok = True
        for pk in order:
            c = st.contributions.get(pk)
            if c is None or not c.online or pk in world.malicious or pk in tamper.colluders:
                continue
            res = ap.check_own_leaf(tree, ctx.ms_roots[j], c.records[j])
            if not res.ok:
                ok = False
                note(ap.MEMBERSHIP_INVALID, ap.AGGREGATOR, pk, j, "own-leaf")
                break
        if tree is st.honest_trees[j]:
            st.own_leaf_ok[j] = ok

    # decryption committees check the root they will decrypt
    for j, audit in enumerate(audits):
        members = st.committees[f"decryption-{j % cfg.active_decryption_committees}"]
        checker = next((pk for pk in members if pk not in world.malicious), None)
        for v in audit.root():
            if checker is not None:
                note(v.kind, v.offender, checker, j, "decryption-committee")

    verifiers = honest
    fo = ap.fan_out(audits, verifiers, cfg.s, cfg.verify_prob, stream_key, with_costs=with_costs)
    for d in fo.detections:
        note(d.kind, d.offender, d.verifier, d.tree, "verifier")
    dets = sorted(found.values(), key=lambda d: (d.kind, d.offender))
    return AddOutcome(trees, commit_trees, dets, fo, M_prime)


def _prepare_add(world: World, st: RoundState) -> None:
    """Commit roots, then the PIT point from a commit-reveal beacon, then the honest forest."""
    ell = world.ell
    st.honest_rows = _bottom_rows(st, world)
    order = sorted(st.honest_rows)
    st.commit_trees = [ap.build_commit_tree((pk, st.commits[pk][j]) for pk in order)
                       for j in range(ell)]
    members = world.master_members
    session = RandBeaconSession(world.ring.modulus, members)
    reveals = {}
    for pk in members:
        rng = world.rng("pit", st.t, pk)
        value = int.from_bytes(rng.bytes(16), "little") % world.ring.modulus
        nonce = rng.bytes(16)
        session.commit(pk, beacon_commit(value, nonce))
        reveals[pk] = (value, nonce)
    session.close()
    for pk in members:
        session.reveal(pk, *reveals[pk])
    st.r = beacon_finalize(session)
    world.ledger.up("master", len(members) * (32 + 32), "beacon")
    world.ledger.op("master", "hash", 2 * len(members))
    st.honest_trees = {j: ap.SummationTree(j, [st.honest_rows[pk][j] for pk in order], st.r,
                                           world.cfg.pit) for j in range(ell)}


def _honest_audits(world: World, st: RoundState) -> None:
    cfg = world.cfg
    bound_for = {pk: c.bound for pk, c in st.contributions.items()}
    stmts: dict = {}

    def attest_ok(pk, ct, att):
        b = bound_for.get(pk, cfg.S)
        stmt = stmts.get(b)
        if stmt is None:
            stmt = stmts[b] = world.authority.statement(st.t, b)
        return world.attest_ok(stmt, ct, att)

    trees = [st.honest_trees[j] for j in range(world.ell)]
    ctx = ap.VerifierContext(st.t, [c.root for c in st.commit_trees], [tr.ms_root for tr in trees],
                             [tr.root_ct for tr in trees], st.r, world.M_max, attest_ok)
    st.honest_audits = {j: ap.TreeAudit(trees[j], st.commit_trees[j], ctx) for j in range(world.ell)}


def _add_costs(world: World, st: RoundState, out: AddOutcome) -> None:
    cfg, led = world.cfg, world.ledger
    fo = out.fanout
    n = world.ring.degree
    depth = max(1, math.ceil(math.log2(max(out.M_prime, 2))))
    vdepth = max(1, math.ceil(math.log2(max(2 * out.M_prime, 2))))
    rec_bytes = ap.leaf_record_bytes(n)
    vbytes = ap.nonleaf_bytes(cfg.pit, n)
    led.down("verifier", fo.leaves_fetched * (rec_bytes + 32 + (depth + vdepth) * 32 + 16), "leaf_records")
    led.down("verifier", fo.nonleaf_vertices * vbytes, "nonleaf_vertex_bytes")
    led.count("verifier", "nonleaf_vertices", fo.nonleaf_vertices)
    led.down("verifier", fo.leaf_children * rec_bytes, "leaf_children")
    led.down("verifier", (fo.nonleaf_vertices + fo.leaf_children) * (vdepth * 32 + 8), "vertex_paths")
    led.down("verifier", fo.trees_checked * (32 * 2 + 16), "roots")
    led.op("verifier", "verify", fo.leaves_fetched)
    led.op("verifier", "hash", fo.leaves_fetched * (2 + depth + vdepth)
           + (fo.nonleaf_vertices + fo.leaf_children) * (1 + vdepth))
    led.count("verifier", "trees_checked", fo.trees_checked)
    led.count("verifier", "nonleaf_picks", fo.nonleaf_picks)
    for pk, c in st.contributions.items():
        if c.online:
            role = "generator" if c.role == "generator" else "dp-noise"
            led.down(role, world.ell * (vdepth * 32 + 8 + 32), "membership_proofs")
            led.op(role, "hash", world.ell * (vdepth + 1))


def _round_tag_ok(pt_round: int, included: int, t: int, t_plain: int) -> bool:
    return pt_round % t_plain == (included * t) % t_plain


# -- release ------------------------------------------------------------------------------------

def _release(world: World, st: RoundState, out: AddOutcome) -> tuple[np.ndarray, dict]:
    cfg = world.cfg
    dec = cfg.committees["decryption"]
    quorum = list(range(1, dec.A + 2))
    chunks, tag_ok = [], True
    for j, tree in enumerate(out.trees):
        k = j % cfg.active_decryption_committees
        ss = st.decryption_shares[k]
        rng = world.rng("partial", st.t, j)
        ct = tree.root_ct
        partials = []
        for i in quorum:
            lam = lagrange_coeff(quorum, i, world.ring.modulus)
            s_i = RingPoly(world.ring, ss.shares[i])
            partials.append(partial_decrypt(s_i, lam, ct.c1, world.smudge, world.ahe, rng))
        pt = combine_partials(ct.c2, partials, world.ahe, expected=len(quorum))
        included = sum(1 for rec in tree.leaves if not rec.is_bottom)
        tag_ok &= _round_tag_ok(pt.round_t, included, st.t, world.ahe.t_plain)
        chunks.append(decode(pt, world.scale, t_plain=world.ahe.t_plain))
        world.ledger.down("decryption", len(quorum) * len(ct.wire), "root_ciphertexts")
        world.ledger.up("decryption", len(quorum) * world.ring.poly_bytes, "partials")
        world.ledger.op("decryption", "ring_mul", len(quorum))
    agg = np.concatenate(chunks)[:cfg.model_dim]
    return agg, {"round_tag_ok": bool(tag_ok)}


def _oracles(world: World, st: RoundState, out: AddOutcome) -> tuple[np.ndarray, np.ndarray]:
    q_sum = np.zeros(world.cfg.model_dim)
    r_sum = np.zeros(world.cfg.model_dim)
    included = {rec.pk for rec in out.trees[0].leaves if not rec.is_bottom}
    for pk, c in st.contributions.items():
        if pk in included and c.online:
            q_sum += np.rint(c.quantized * world.scale)
            r_sum += c.real
    return q_sum / world.scale, r_sum


def run_round(world: World, script: AdversaryScript | None = None) -> RoundReport:
    script = script or AdversaryScript(tuple(world.cfg.adversary))
    cfg = world.cfg
    world.round_t += 1
    t = world.round_t
    world.ledger = CostLedger()
    expected = sorted({EXPECTED[b] for b in script.behaviours})
    info = {"ell": world.ell, "M_max": world.M_max, "union_bound": world.union_bound,
            "smudge_bound_bits": world.smudge.bit_length(), "pit": cfg.pit}

    eps_next = world.accountant.preview(cfg.q, cfg.z)
    if eps_next > cfg.epsilon_budget:
        return RoundReport(t, "aborted: privacy budget exhausted", [], [], None, None, None,
                           world.accountant.epsilon, cfg.delta, world.ledger.snapshot(), info)
    st = _setup(world, t, script)
    _generate(world, st)
    _prepare_add(world, st)
    _honest_audits(world, st)
    _post_by_committee(world, world.master_members, cfg.committees["master"].A, t, "pit-point",
                       st.r.to_bytes(16, "little"))

    trng = world.rng("adversary", t)
    tampers = [make_tamper(world, st, b, trng, st.honest_rows) for b in script.behaviours]
    skipped = [tp.behaviour for tp in tampers if not tp.applicable]
    expected = sorted({EXPECTED[tp.behaviour] for tp in tampers if tp.applicable})
    tamper = _merge_tamper([tp for tp in tampers if tp.applicable])
    out = aggregate_and_verify(world, st, tamper, world.seed + b"verify" + struct.pack("<q", t),
                               with_costs=True, post=True)
    _add_costs(world, st, out)
    info.update({"M_prime": out.M_prime, "r": str(st.r), "not_applicable": skipped,
                 "committee_sizes": {k: len(v) for k, v in st.committees.items()},
                 "sampled": sum(1 for c in st.contributions.values() if c.role == "generator"),
                 "board_length": len(world.board), "board_digest": world.board.digest().hex()})
    world.records_by_round = {t: {pk: c.records for pk, c in st.contributions.items() if c.online},
                              t - 1: world.records_by_round.get(t - 1, {})}
    world.last_state = st

    if out.detections:
        eps = world.accountant.epsilon
        report = RoundReport(t, "aborted: misbehaviour detected", out.detections, expected, None,
                             None, None, eps, cfg.delta, world.ledger.snapshot(), info)
        return report
    agg, extra = _release(world, st, out)
    info.update(extra)
    oracle_q, oracle_real = _oracles(world, st, out)
    eps = world.accountant.record_round(cfg.q, cfg.z)
    world.theta = world.theta + agg / (cfg.q * cfg.W)
    info["board_length"] = len(world.board)
    return RoundReport(t, "ok", [], expected, agg, oracle_q, oracle_real, eps, cfg.delta,
                       world.ledger.snapshot(), info)


def ledger_snapshot(world: World) -> LedgerSnapshot:
    return world.ledger.snapshot()


# -- repeated trials on one generated round -----------------------------------------------------

@dataclass
class TrialResult:
    behaviour: str
    detected: bool
    kinds: set
    covered: bool | None = None


def detection_trials(world: World, behaviour: str, trials: int, s: int | None = None,
                     verify_prob: float | None = None, key: bytes = b"trials") -> list[TrialResult]:
    """Re-run the add phase ``trials`` times on the last generated round, each time with a fresh
    adversary draw and fresh verifier randomness."""
    st = world.last_state
    if st is None:
        raise ProtocolError("run a round first")
    cfg = world.cfg
    saved = cfg
    if s is not None or verify_prob is not None:
        world.cfg = cfg.with_overrides(s=s, verify_prob=verify_prob)
    try:
        out = []
        for k in range(trials):
            rng = world.rng("trial", key, behaviour, k)
            tp = make_tamper(world, st, behaviour, rng, st.honest_rows)
            if not tp.applicable:
                raise ProtocolError(f"{behaviour} is not applicable in round {st.t}")
            res = aggregate_and_verify(world, st, tp, world.seed + key + struct.pack("<q", k))
            kinds = {d.kind for d in res.detections}
            covered = None
            if behaviour == "replay-prev-round":
                covered = _replay_covered(world, st, tp, res, key, k)
            out.append(TrialResult(behaviour, EXPECTED[behaviour] in kinds, kinds, covered))
        return out
    finally:
        world.cfg = saved


def _replay_covered(world, st, tp, res, key, k) -> bool:
    """Did any honest verifier's leaf window include one of the replayed leaves?"""
    cfg = world.cfg
    pk = next(iter(tp.colluders))
    verifiers = sorted(p for p in world.devices if p not in world.malicious and p not in tp.colluders)
    stream_key = world.seed + key + struct.pack("<q", k)
    for tree in res.trees:
        pos = tree.position_of(pk)
        m = tree.num_leaves
        coins, starts = ap._first_draws(stream_key, verifiers, tree.j, m)
        sel = coins < cfg.verify_prob if cfg.verify_prob < 1 else np.ones(len(verifiers), bool)
        if np.any(sel & (((pos - starts) % m) < min(cfg.s, m))):
            return True
    return False


# -- scenarios ----------------------------------------------------------------------------------

LEDGER_FIELDS = ["round", "role", "bytes_up", "bytes_down", *OPS]


def run_scenario(cfg: WorldConfig, out_dir: str | Path, check: bool = False) -> tuple[int, list]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = World(cfg)
    script = AdversaryScript(tuple(cfg.adversary))
    reports = []
    failures = []
    with open(out / "ledger.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LEDGER_FIELDS)
        for _ in range(cfg.rounds):
            rep = run_round(world, script)
            reports.append(rep)
            (out / f"round_{rep.round_t}.json").write_text(json.dumps(rep.to_json(), indent=2,
                                                                      sort_keys=True) + "\n")
            for role, snap in rep.ledger.roles.items():
                w.writerow([rep.round_t, role, snap.bytes_up, snap.bytes_down,
                            *[snap.ops.get(o, 0) for o in OPS]])
            failures.extend(_check_report(rep, script))
            log.info("round %d: %s, %d detections", rep.round_t, rep.status, len(rep.detections))
    world.board.save(out / "board.bin")
    (out / "board.jsonl").write_text(world.board.dump_json() + "\n")
    if check and failures:
        for f in failures:
            log.error("check failed: %s", f)
        return 1, reports
    return 0, reports


def _check_report(rep: RoundReport, script: AdversaryScript) -> list[str]:
    bad = []
    if rep.undetected:
        bad.append(f"round {rep.round_t}: undetected {rep.undetected}")
    if not script.behaviours:
        if rep.detections:
            bad.append(f"round {rep.round_t}: honest run raised {sorted(rep.detected_kinds)}")
        if rep.status == "ok" and not rep.matches_oracle:
            bad.append(f"round {rep.round_t}: aggregate differs from the plaintext oracle")
    return bad
