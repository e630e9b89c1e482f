"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (with wall time) that the terminal summary
prints at the end of the run.
"""
import contextlib
import hashlib
import math
import time

import mpmath
import numpy as np
import pytest

from dpagg import params
from dpagg import aggproto as ap
from dpagg import zq
from dpagg.ahe import (AheParams, Plaintext, check_smudging_headroom, combine_partials, ct_sum,
                       decrypt, decryption_noise, encrypt, keygen, partial_decrypt)
from dpagg.attest import Attestation, SCHEME_ID
from dpagg.committee import failure_prob
from dpagg.config import AheConfig, CommitteeConfig, WorldConfig
from dpagg.dpcore import epsilon_for, moments_alpha, noise_share_std, NoisePlan, sample_noise_share
from dpagg.harness import EXPECTED, World, detection_trials, run_round
from dpagg.ring import RingParams, RingPoly, ring_eval, uniform_below
from dpagg.sharing import (DlogGroup, lagrange_coeff, reconstruct, reshare_dealings, share,
                           verify_share)

RESULTS: list[str] = []
T = params.T_PLAIN


@contextlib.contextmanager
def criterion(n: int, title: str, limit_s: float):
    start = time.perf_counter()
    ok = False
    detail: dict = {}
    try:
        yield detail
        elapsed = time.perf_counter() - start
        assert elapsed < limit_s, f"took {elapsed:.1f}s, limit {limit_s:.0f}s"
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        note = f"  [{detail['note']}]" if "note" in detail else ""
        RESULTS.append(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}  ({elapsed:.1f}s){note}")


def small_committees(C, A, dp_c=None, dp_a=None):
    return {"master": CommitteeConfig(C, A), "dp_noise": CommitteeConfig(dp_c or C, dp_a or A),
            "decryption": CommitteeConfig(C, A)}


# 1 ---------------------------------------------------------------------------------------------

def test_c01_committee_failure_probabilities():
    with criterion(1, "committee failure bounds", 1):
        for (f, t, C), want in {(0.03, 1 / 7, 280): 4.1e-14, (0.05, 1 / 8, 350): 9.78e-7,
                                (0.10, 1 / 5, 350): 1.34e-6}.items():
            assert failure_prob(f, t, C) == pytest.approx(want, rel=0.10)


# 2 ---------------------------------------------------------------------------------------------

def test_c02_sampling_concentration():
    with criterion(2, "sampling concentration guard", 1):
        assert ap.sampling_concentration(0.9, 5000) == pytest.approx(5.77e-12, rel=0.10)
        assert ap.sampling_concentration(0.93, 10000) == pytest.approx(1.27e-11, rel=0.10)


# 3 ---------------------------------------------------------------------------------------------

def test_c03_detection_monte_carlo():
    with criterion(3, "one tampered leaf, W=1e4 f=0.03 s=5: miss rate <= 0.012", 120) as info:
        W, f, s, q = 10_000, 0.03, 5, 0.05
        M = int(q * W)
        trials = 20_000
        miss = ap.simulate_detection(W, f, s, q, M, trials, np.random.default_rng(2024))
        info["note"] = f"miss rate {miss:.4f}"
        assert miss <= 0.012
        assert miss == pytest.approx(ap.detection_miss_prob(q, s, M, f, W), abs=0.003)


# 4 ---------------------------------------------------------------------------------------------

def test_c04_bfv_correctness():
    with criterion(4, "BFV roundtrips, 1024-ciphertext sum and noise bound at N=1024", 120):
        p = AheParams.create(RingParams(1024, params.Q120))
        rng = np.random.default_rng(4)
        pk, sk = keygen(p, rng)
        cts, pts = [], []
        for k in range(1024):
            pt = Plaintext(1, tuple(int(v) for v in rng.integers(0, T, p.slots)))
            ct, _ = encrypt(pk, pt, p, rng)
            if k < 1000:
                assert decrypt(sk, ct, p) == pt
                assert decryption_noise(sk, ct, pt, p).inf_norm() <= p.fresh_noise_bound
            cts.append(ct)
            pts.append(pt)
        total = ct_sum(cts)
        got = decrypt(sk, total, p)
        want = tuple(sum(pt.values[i] for pt in pts) % T for i in range(p.slots))
        assert got.values == want and got.round_t == 1024 % T
        assert decryption_noise(sk, total, pts, p).inf_norm() <= 1024 * p.fresh_noise_bound


# 5 ---------------------------------------------------------------------------------------------

def test_c05_threshold_decryption():
    with criterion(5, "combine_partials equals central decryption, C=45 quorum 19", 60):
        p = AheParams.create(RingParams(1024, params.Q120))
        rng = np.random.default_rng(5)
        pk, sk = keygen(p, rng)
        group = DlogGroup.for_modulus(p.ring.modulus)
        ss = share(sk.s.limbs, 45, 18, group, rng)
        bound = check_smudging_headroom(p, 45, 1)
        q = p.ring.modulus
        for _ in range(100):
            pt = Plaintext(2, tuple(int(v) for v in rng.integers(0, T, p.slots)))
            ct, _ = encrypt(pk, pt, p, rng)
            quorum = sorted(rng.choice(np.arange(1, 46), 19, replace=False).tolist())
            parts = [partial_decrypt(RingPoly(p.ring, ss.shares[i]), lagrange_coeff(quorum, i, q),
                                     ct.c1, bound, p, rng) for i in quorum]
            assert combine_partials(ct.c2, parts, p) == decrypt(sk, ct, p) == pt


# 6 ---------------------------------------------------------------------------------------------

def test_c06_noise_share_variance():
    with criterion(6, "240 shares at sigma/sqrt(240) sum to variance sigma^2", 60):
        sigma = 1.0
        std = noise_share_std(NoisePlan(280, 40), sigma)
        assert std == pytest.approx(sigma / math.sqrt(240))
        rng = np.random.default_rng(6)
        total = np.zeros(100_000)
        for _ in range(240):
            total += sample_noise_share(std, total.size, rng)
        assert abs(total.var() / sigma ** 2 - 1) <= 0.05


# 7 ---------------------------------------------------------------------------------------------

def _leaf_rows(p, pk, M, rng, round_t=1):
    rows = []
    for i in range(M):
        dev = hashlib.sha256(i.to_bytes(4, "little")).digest()
        pt = Plaintext(round_t, tuple(int(v) for v in rng.integers(0, 64, p.slots)))
        ct, _ = encrypt(pk, pt, p, rng)
        nonce, _ = ap.make_commitment(dev, ct, rng)
        att = Attestation(SCHEME_ID, hashlib.sha256(dev + ct.digest).digest())
        rows.append([ap.LeafRecord(dev, ct, nonce, att)])
    return rows


def _attest_ok(pk, ct, att):
    return att.token == hashlib.sha256(pk + ct.digest).digest()


def test_c07_pit_soundness():
    with criterion(7, "PIT: honest forests pass, 1e4 forged non-leaves all caught at Q~2^120", 120):
        p = AheParams.create(RingParams(1024, params.Q120))
        rng = np.random.default_rng(7)
        pk, _ = keygen(p, rng)
        q = p.ring.modulus
        rows = _leaf_rows(p, pk, 64, rng)
        commit = [ap.build_commit_tree([(r[0].pk, r[0].commitment) for r in rows])]
        for trial in range(5):
            r = int(uniform_below(q, 1, rng)[0, 0]) | (int(uniform_below(q, 1, rng)[0, 1]) << 64)
            forest = ap.build_summation_forest(rows, r % q, commit, 100)
            tree = forest.trees[0]
            ctx = ap.VerifierContext(1, [commit[0].root], [tree.ms_root], forest.root_cts,
                                     forest.r, 100, _attest_ok)
            audit = ap.TreeAudit(tree, commit[0], ctx)
            assert all(ap.check_leaves(audit, v, 6).ok for v in range(tree.num_leaves))
            assert ap.check_nonleaves(audit, tree.nonleaves()).ok
        honest = forest.trees[0]
        r = forest.r
        nonleaves = honest.nonleaves()
        caught = 0
        trials = 10_000
        for k in range(trials):
            lv, idx = nonleaves[int(rng.integers(len(nonleaves)))]
            # forged vertex polynomials P + D with D != 0; dense or single-coefficient D
            if k % 2:
                d1, d2 = (RingPoly(p.ring, uniform_below(q, 1024, rng)) for _ in range(2))
            else:
                d1 = RingPoly.monomial(int(rng.integers(1024)), p.ring, int(rng.integers(1, 1 << 62)))
                d2 = RingPoly.zero(p.ring)
            if not any(d1.coeffs) and not any(d2.coeffs):
                continue
            e1, e2 = ring_eval(d1, r, p.ring), ring_eval(d2, r, p.ring)
            v = honest.value(lv, idx)
            forged = ap.SummationTree(0, honest.leaves, r,
                                      overrides={(lv, idx): ((v[0] + e1) % q, (v[1] + e2) % q)})
            ctx = ap.VerifierContext(1, [commit[0].root], [forged.ms_root], forest.root_cts, r,
                                     100, _attest_ok)
            res = ap.check_nonleaves(ap.TreeAudit(forged, commit[0], ctx), [(lv, idx)])
            caught += not res.ok
        assert caught == trials


# 8 ---------------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def replay_world():
    cfg = WorldConfig(W=800, q=0.05, z=1.0, rounds=2, seed=8, model_dim=2046,
                      committees=small_committees(9, 3, 20, 5))
    w = World(cfg)
    run_round(w)
    return w, run_round(w)


def test_c08_replay_freshness(replay_world):
    with criterion(8, "replayed leaf flagged whenever covered; end-to-end miss <= 0.012", 120):
        w, rep = replay_world
        assert rep.status == "ok" and w.cfg.f == 0.03
        # per-tree selection probability M'/W: each leaf expects (1 - f) s honest windows
        res = detection_trials(w, "replay-prev-round", 500, s=5,
                               verify_prob=rep.info["M_prime"] / w.cfg.W)
        covered = [r for r in res if r.covered]
        assert covered and all(r.detected and r.kinds == {"attestation-invalid"} for r in covered)
        miss = 1 - sum(r.detected for r in res) / len(res)
        assert miss <= 0.012



# 9 ---------------------------------------------------------------------------------------------

def test_c09_tree_count_for_published_model():
    with criterion(9, "ciphertexts per update for 1.2e6 parameters at N=4096 is 293", 1) as info:
        info["note"] = f"computed {ap.num_trees(1_200_000, 4096)}"
        assert ap.num_trees(1_200_000, 4096) == 293


# 10 --------------------------------------------------------------------------------------------

def test_c10_pit_bytes_per_vertex():
    with criterion(10, "non-leaf download 32 B with PIT vs 131072 B without at N=4096", 60):
        base = WorldConfig(W=300, q=0.05, z=1.0, rounds=1, seed=10, model_dim=4095,
                           ahe=AheConfig(degree=4096), committees=small_committees(5, 2, 10, 2))
        on = run_round(World(base)).ledger.per_nonleaf_vertex_bytes()
        off = run_round(World(base.with_overrides(pit=False))).ledger.per_nonleaf_vertex_bytes()
        assert on == 32 and off == 2 * 4096 * 16 == 131072
        assert off / on == 4096


# 11 --------------------------------------------------------------------------------------------

def test_c11_resharing_across_rounds():
    with criterion(11, "3 rounds reshare the key twice; round 3 correct; 1e3 bad subshares caught", 120):
        cfg = WorldConfig(W=800, q=0.05, z=1.0, rounds=3, seed=11, model_dim=2046,
                          committees=small_committees(9, 3, 20, 5))
        w = World(cfg)
        digests = []
        for _ in range(3):
            rep = run_round(w)
            assert rep.status == "ok" and rep.detections == []
            digests.append(w.master_shares.feldman.transcript_digest)
        assert len(set(digests)) == 3  # fresh dealing each round: two reshares after keygen
        assert rep.round_t == 3 and rep.matches_oracle
        A = w.master_shares.threshold
        key = reconstruct({i: w.master_shares.shares[i] for i in range(1, A + 2)}, w.ring.modulus)
        assert np.array_equal(key, w.secret_key.s.limbs)

        dealings = reshare_dealings(w.master_shares, range(1, A + 2), 9, 3, np.random.default_rng(1))
        stripped = {j: type(d.feldman)(d.feldman.group, d.feldman.rows, {}) for j, d in dealings.items()}
        rng = np.random.default_rng(11)
        q = w.ring.modulus
        for _ in range(1000):
            j = int(rng.choice(list(dealings)))
            i = int(rng.integers(1, 10))
            coords = zq.from_limbs(dealings[j].shares[i])
            k = int(rng.integers(len(coords)))
            coords[k] = (coords[k] + 1 + int(rng.integers(0, 1 << 62))) % q
            assert not verify_share(i, zq.to_limbs(coords), stripped[j])
        assert all(verify_share(i, s, stripped[j]) for j, d in dealings.items()
                   for i, s in list(d.shares.items())[:2])


# 12 --------------------------------------------------------------------------------------------

DESK_BEHAVIOURS = [b for b in EXPECTED if b != "biased-committee-pick"]


def test_c12_desk_scale_detection():
    with criterion(12, "8 behaviours caught in >= 99% of 500 trials at desk scale, honest clean", 600) as info:
        w = World(WorldConfig(rounds=2, seed=12))
        for _ in range(2):
            rep = run_round(w)
            assert rep.status == "ok" and rep.detections == [] and rep.matches_oracle
        rates = {}
        for b in DESK_BEHAVIOURS:
            res = detection_trials(w, b, 500, s=6)
            rates[b] = sum(r.detected for r in res) / len(res)
        info["note"] = f"lowest rate {min(rates.values()):.3f}"
        assert all(rate >= 0.99 for rate in rates.values()), rates


# 13 --------------------------------------------------------------------------------------------

def _alpha_mp(q, z, lam):
    mpmath.mp.dps = 50
    q, z = mpmath.mpf(q), mpmath.mpf(z)
    return q * q * lam * (lam + 1) / ((1 - q) * z * z)


def test_c13_accountant():
    with criterion(13, "moment bound matches 50-digit arithmetic; epsilon monotone", 1):
        grid = [(q, z, lam) for q in (0.0005, 0.001, 0.002, 0.005) for z, lam in
                ((1.0, 1), (1.0, 2), (2.0, 4), (4.0, 16), (8.0, 64))]
        assert len(grid) == 20
        for q, z, lam in grid:
            assert moments_alpha(q, z, lam) == pytest.approx(float(_alpha_mp(q, z, lam)), rel=1e-12)
        d = 1e-5
        eps_T = [epsilon_for(T, 0.01, 2.0, d) for T in range(0, 200, 10)]
        assert all(a <= b for a, b in zip(eps_T, eps_T[1:]))
        eps_q = [epsilon_for(50, q, 2.0, d) for q in np.linspace(0.001, 0.03, 15)]
        assert all(a <= b for a, b in zip(eps_q, eps_q[1:]))
        eps_z = [epsilon_for(50, 0.005, z, d) for z in np.linspace(1.0, 6.0, 15)]
        assert all(a >= b for a, b in zip(eps_z, eps_z[1:]))
