import hashlib
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpagg import params, zq
from dpagg.errors import ParameterError, ProtocolError
from dpagg.sharing import (DlogGroup, RandBeaconSession, beacon_commit, beacon_finalize,
                           check_dealer, combine_dealings, lagrange_coeff, reconstruct, reshare,
                           reshare_dealings, share, verify_share)

Q = params.Q120


@pytest.fixture(scope="module")
def group():
    return DlogGroup.for_modulus(Q)


@pytest.fixture(scope="module")
def g97():
    return DlogGroup.for_modulus(97)


def secret_vec(n, q, seed=0):
    return zq.to_limbs([int(v) % q for v in np.random.default_rng(seed).integers(0, 1 << 62, n)])


def same(a, b):
    return np.array_equal(np.asarray(a), np.asarray(b))


def poly_eval(coeffs, x, q):
    return sum(c * pow(x, k, q) for k, c in enumerate(coeffs)) % q


def test_group_structure(group, g97):
    for gr in (group, g97, DlogGroup.for_modulus(params.Q61)):
        assert (gr.p - 1) % gr.q == 0
        assert pow(gr.g, gr.q, gr.p) == 1 and gr.g != 1


def test_generated_group():
    gr = DlogGroup.generate(params.Q61)
    assert pow(gr.g, gr.q, gr.p) == 1 and gr.g != 1


def test_degenerate_sharing(g97):
    ss = share(secret_vec(4, 97), 1, 0, g97, np.random.default_rng(1))
    assert same(ss.shares[1], secret_vec(4, 97))


def test_every_quorum_reconstructs(g97):
    sec = secret_vec(6, 97, 3)
    ss = share(sec, 5, 2, g97, np.random.default_rng(2))
    for quorum in itertools.combinations(range(1, 6), 3):
        assert same(reconstruct({i: ss.shares[i] for i in quorum}, 97), sec)


def test_random_quorums_at_45(group):
    sec = secret_vec(8, Q, 4)
    ss = share(sec, 45, 18, group, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    for _ in range(10):
        quorum = sorted(rng.choice(np.arange(1, 46), 19, replace=False).tolist())
        assert same(reconstruct({i: ss.shares[i] for i in quorum}, Q), sec)


def test_feldman_identity_every_member(group):
    ss = share(secret_vec(8, Q), 7, 3, group, np.random.default_rng(5))
    for i, s in ss.shares.items():
        assert verify_share(i, s, ss.feldman)
        assert verify_share(i, s, ss.feldman, exact=True)


def test_tampered_share_rejected(group):
    ss = share(secret_vec(8, Q), 7, 3, group, np.random.default_rng(5))
    bad = zq.to_limbs([(v + 1) % Q for v in zq.from_limbs(ss.shares[2])])
    assert not verify_share(2, bad, ss.feldman)
    assert not verify_share(2, bad, ss.feldman, exact=True)
    assert not verify_share(3, ss.shares[2], ss.feldman)


def test_tampers_rejected_at_45(group):
    ss = share(secret_vec(16, Q), 45, 18, group, np.random.default_rng(6))
    feld = type(ss.feldman)(group, ss.feldman.rows, {})  # no digest shortcut: exponent check only
    rng = np.random.default_rng(7)
    for _ in range(1000):
        i = int(rng.integers(1, 46))
        coords = zq.from_limbs(ss.shares[i])
        k = int(rng.integers(len(coords)))
        coords[k] = (coords[k] + 1 + int(rng.integers(0, 1 << 62)) * 977) % Q
        assert not verify_share(i, zq.to_limbs(coords), feld)


def test_tamper_rejected_without_digest_shortcut(group):
    """The batched exponent check alone catches a tamper the share digest would also flag."""
    ss = share(secret_vec(16, Q), 9, 4, group, np.random.default_rng(8))
    feld = ss.feldman
    stripped = type(feld)(feld.group, feld.rows, {})
    coords = zq.from_limbs(ss.shares[3])
    coords[5] = (coords[5] + 1) % Q
    assert verify_share(3, ss.shares[3], stripped)
    assert not verify_share(3, zq.to_limbs(coords), stripped)


def test_reshare_preserves_secret(group):
    sec = secret_vec(8, Q, 9)
    ss = share(sec, 5, 2, group, np.random.default_rng(9))
    new = reshare(ss, [1, 3, 5], 7, 3, group, np.random.default_rng(10))
    assert new.count == 7 and new.threshold == 3
    assert same(reconstruct({i: new.shares[i] for i in (2, 4, 6, 7)}, Q), sec)
    again = reshare(new, [1, 2, 3, 4], 5, 2, group, np.random.default_rng(11))
    assert same(reconstruct({i: again.shares[i] for i in (1, 2, 5)}, Q), sec)


def test_reshare_needs_quorum(group):
    ss = share(secret_vec(4, Q), 5, 2, group, np.random.default_rng(9))
    with pytest.raises(ProtocolError):
        reshare(ss, [1, 2], 5, 2, group, np.random.default_rng(1))


def test_tampered_subshare_rejected(group):
    ss = share(secret_vec(8, Q), 5, 2, group, np.random.default_rng(12))
    dealings = reshare_dealings(ss, [1, 2, 3], 5, 2, np.random.default_rng(13))
    d = dealings[2]
    coords = zq.from_limbs(d.shares[4])
    coords[0] = (coords[0] + 1) % Q
    d.shares[4] = zq.to_limbs(coords)
    new = combine_dealings(dealings, 5, 2)
    assert not verify_share(4, new.shares[4], new.feldman)
    assert all(verify_share(i, new.shares[i], new.feldman) for i in (1, 2, 3, 5))


def test_cheating_dealer_rejected(group):
    ss = share(secret_vec(8, Q), 5, 2, group, np.random.default_rng(14))
    quorum = [1, 2, 3]
    dealings = reshare_dealings(ss, quorum, 5, 2, np.random.default_rng(15))
    honest = {j: check_dealer(ss.feldman, j, lagrange_coeff(quorum, j, Q), d.feldman)
              for j, d in dealings.items()}
    assert all(honest.values())
    fake = share(secret_vec(8, Q, 99), 5, 2, group, np.random.default_rng(16))
    assert not check_dealer(ss.feldman, 2, lagrange_coeff(quorum, 2, Q), fake.feldman)


def test_lagrange_examples():
    assert lagrange_coeff([1], 1, Q) == 1
    assert lagrange_coeff([1, 2], 1, Q) == 2
    assert lagrange_coeff([1, 2], 2, Q) == Q - 1
    with pytest.raises(ParameterError):
        lagrange_coeff([1, 1, 2], 1, Q)
    with pytest.raises(ParameterError):
        lagrange_coeff([1, 2], 3, Q)
    rng = np.random.default_rng(0)
    coeffs = [int(v) for v in rng.integers(0, 1 << 62, 3)]
    quorum = [1, 3, 5]
    got = sum(lagrange_coeff(quorum, i, Q) * poly_eval(coeffs, i, Q) for i in quorum) % Q
    assert got == coeffs[0]


def test_share_rejects_bad_threshold(group):
    with pytest.raises(ParameterError):
        share(secret_vec(2, Q), 3, 3, group, np.random.default_rng(0))


def test_two_shares_uniform_at_threshold_two(g97):
    """Any two of five shares of a degree-2 sharing are jointly uniform (chi-square)."""
    n = 100_000
    sec = zq.to_limbs([42] * n)
    ss = share(sec, 5, 2, g97, np.random.default_rng(17))
    a = np.array(zq.from_limbs(ss.shares[2]))
    b = np.array(zq.from_limbs(ss.shares[5]))
    counts = np.bincount(a * 97 + b, minlength=97 * 97)
    expected = n / (97 * 97)
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    df = 97 * 97 - 1
    # five standard deviations above the chi-square mean
    assert chi2 < df + 5 * np.sqrt(2 * df)


def test_beacon_examples():
    s = RandBeaconSession(Q, ["a"])
    s.commit("a", beacon_commit(12345, b"n" * 16))
    s.close()
    assert s.reveal("a", 12345, b"n" * 16)
    assert beacon_finalize(s) == 12345

    s = RandBeaconSession(Q, [1, 2, 3])
    for m, v in zip((1, 2, 3), (3, 5, Q - 1)):
        s.commit(m, beacon_commit(v, bytes([m]) * 16))
    s.close()
    for m, v in zip((1, 2, 3), (3, 5, Q - 1)):
        s.reveal(m, v, bytes([m]) * 16)
    assert beacon_finalize(s) == 7


def test_beacon_excludes_bad_reveal():
    rng = np.random.default_rng(3)
    vals = [int(v) for v in rng.integers(0, 1 << 62, 10)]
    s = RandBeaconSession(Q, range(10))
    for m, v in enumerate(vals):
        s.commit(m, beacon_commit(v, bytes([m]) * 16))
    s.close()
    for m, v in enumerate(vals):
        s.reveal(m, v + (1 if m == 4 else 0), bytes([m]) * 16)
    assert beacon_finalize(s) == (sum(vals) - vals[4]) % Q
    assert s.excluded == [4]


def test_beacon_sequencing():
    s = RandBeaconSession(Q, ["a", "b"])
    s.commit("a", beacon_commit(1, bytes(16)))
    with pytest.raises(ProtocolError):
        s.close()
    with pytest.raises(ProtocolError):
        s.reveal("a", 1, bytes(16))
    s.commit("b", beacon_commit(2, bytes(16)))
    with pytest.raises(ProtocolError):
        s.commit("a", beacon_commit(1, bytes(16)))
    s.close()
    with pytest.raises(ProtocolError):
        s.commit("c", beacon_commit(1, bytes(16)))


def test_beacon_commit_format():
    assert beacon_commit(5, b"x" * 16) == hashlib.sha256(b"x" * 16 + (5).to_bytes(16, "little")).digest()


@settings(max_examples=25)
@given(st.integers(1, 6), st.data())
def test_reconstruction_any_quorum(C, data):
    A = data.draw(st.integers(0, C - 1))
    g = DlogGroup.for_modulus(params.Q61)
    sec = secret_vec(3, params.Q61, C)
    ss = share(sec, C, A, g, np.random.default_rng(A))
    quorum = data.draw(st.lists(st.integers(1, C), min_size=A + 1, max_size=A + 1, unique=True))
    assert same(reconstruct({i: ss.shares[i] for i in quorum}, params.Q61), sec)


@settings(max_examples=10)
@given(st.integers(1, 3), st.integers(0, 2 ** 20))
def test_reshare_chain_invariance(epochs, seed):
    g = DlogGroup.for_modulus(params.Q61)
    sec = secret_vec(2, params.Q61, seed)
    ss = share(sec, 5, 2, g, np.random.default_rng(seed))
    for e in range(epochs):
        ss = reshare(ss, range(1, ss.threshold + 2), 5, 2, g, np.random.default_rng(seed + e + 1))
    assert same(reconstruct({i: ss.shares[i] for i in (1, 4, 5)}, params.Q61), sec)


@settings(max_examples=30)
@given(st.integers(1, 7), st.integers(0, 3), st.integers(1, params.Q61 - 1))
def test_single_coordinate_tamper_rejected(i, k, delta):
    g = DlogGroup.for_modulus(params.Q61)
    ss = share(secret_vec(4, params.Q61), 7, 3, g, np.random.default_rng(1))
    coords = zq.from_limbs(ss.shares[i])
    coords[k] = (coords[k] + delta) % params.Q61
    assert not verify_share(i, zq.to_limbs(coords), ss.feldman, exact=True)
