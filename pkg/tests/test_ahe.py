import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpagg import params
from dpagg.ahe import (AheParams, Ciphertext, Plaintext, check_smudging_headroom, combine_partials,
                       ct_add, ct_scalar_mul, ct_sum, decode, decrypt, decryption_noise, encode,
                       encrypt, fresh_noise_bound, keygen, num_ciphertexts, partial_decrypt,
                       smudge_bound)
from dpagg.errors import ConfigError, EncodingError, ParameterError, ProtocolError
from dpagg.ring import RingParams, RingPoly, ring_mul, ring_sub
from dpagg.sharing import DlogGroup, lagrange_coeff, share

T = params.T_PLAIN


@pytest.fixture(scope="module")
def fast():
    p = AheParams.create(RingParams(64, params.Q61))
    pk, sk = keygen(p, np.random.default_rng(1))
    return p, pk, sk


@pytest.fixture(scope="module")
def wide():
    p = AheParams.create(RingParams(256, params.Q120))
    pk, sk = keygen(p, np.random.default_rng(2))
    return p, pk, sk


def rand_pt(p, rng, round_t=3):
    return Plaintext(round_t, tuple(int(v) for v in rng.integers(0, T, p.slots)), 1.0)


def test_keygen_deterministic(fast):
    p, pk, sk = fast
    pk2, sk2 = keygen(p, np.random.default_rng(1))
    assert pk2.a == pk.a and pk2.b == pk.b and sk2.s == sk.s


def test_keygen_noise_tail(fast):
    p, pk, sk = fast
    e = ring_sub(pk.b, ring_mul(pk.a, sk.s, p.ring), p.ring).centered()
    assert sum(abs(c) <= 6 * 3.2 for c in e) / len(e) >= 0.9999
    assert set(sk.s.centered()) <= {-1, 0, 1}


def test_roundtrip_many(fast):
    p, pk, sk = fast
    rng = np.random.default_rng(5)
    for _ in range(200):
        m = rand_pt(p, rng)
        ct, _ = encrypt(pk, m, p, rng)
        assert decrypt(sk, ct, p) == m


def test_fresh_noise_within_bound(fast):
    p, pk, sk = fast
    rng = np.random.default_rng(6)
    for _ in range(50):
        m = rand_pt(p, rng)
        ct, _ = encrypt(pk, m, p, rng)
        e = decryption_noise(sk, ct, m, p)
        assert e.inf_norm() <= p.fresh_noise_bound


def test_encrypt_deterministic(fast):
    p, pk, _ = fast
    m = rand_pt(p, np.random.default_rng(0))
    a, _ = encrypt(pk, m, p, np.random.default_rng(9))
    b, _ = encrypt(pk, m, p, np.random.default_rng(9))
    assert a.wire == b.wire


def test_encode_examples(fast):
    p, _, _ = fast
    pt = encode(5, np.zeros(p.slots), 1024, p)
    assert pt.round_t == 5 and set(pt.values) == {0}
    x = np.random.default_rng(1).uniform(-3, 3, p.slots)
    back = decode(encode(1, x, 1024, p), 1024)
    assert np.max(np.abs(back - x)) <= 1 / 1024
    with pytest.raises(EncodingError):
        encode(1, np.full(3, 600.0), 1024, p)
    with pytest.raises(EncodingError):
        encode(1, np.zeros(p.slots + 1), 1024, p)
    with pytest.raises(EncodingError):
        encode(1, np.full(3, 1.0), 1024, p, k_max=600)


def test_plaintext_sum_of_encodings(fast):
    p, _, _ = fast
    rng = np.random.default_rng(3)
    xs = rng.uniform(-1, 1, (100, p.slots))
    pts = [encode(1, x, 1024, p, k_max=100) for x in xs]
    summed = Plaintext(100, tuple(sum(col) % T for col in zip(*(pt.values for pt in pts))), 1024)
    assert np.max(np.abs(decode(summed, 1024) - xs.sum(axis=0))) <= 100 / 1024


def test_ct_add_examples(fast):
    p, pk, sk = fast
    rng = np.random.default_rng(4)
    m = rand_pt(p, rng)
    zero = Plaintext(0, (0,) * p.slots, 1.0)
    a, _ = encrypt(pk, m, p, rng)
    z, _ = encrypt(pk, zero, p, rng)
    assert decrypt(sk, ct_add(a, z), p) == m
    assert ct_add(a, z).adds_count == 2
    assert ct_add(ct_add(a, z), a).adds_count == 3
    assert decrypt(sk, z, p) == zero


def test_sum_of_1024_ciphertexts(fast):
    p, pk, sk = fast
    rng = np.random.default_rng(8)
    pts = [rand_pt(p, rng, round_t=1) for _ in range(1024)]
    cts = [encrypt(pk, m, p, rng)[0] for m in pts]
    total = ct_sum(cts)
    want = Plaintext(1024 % T, tuple(sum(col) % T for col in zip(*(m.values for m in pts))), 1.0)
    assert total.adds_count == 1024
    got = decrypt(sk, total, p)
    assert got == want
    assert decryption_noise(sk, total, pts, p).inf_norm() <= 1024 * p.fresh_noise_bound


def test_scalar_mul(fast):
    p, pk, sk = fast
    rng = np.random.default_rng(11)
    m = Plaintext(2, tuple(int(v) for v in rng.integers(0, 1000, p.slots)), 1.0)
    ct, _ = encrypt(pk, m, p, rng)
    assert ct_scalar_mul(ct, 1) == ct
    assert set(decrypt(sk, ct_scalar_mul(ct, 0), p).values) == {0}
    three = decrypt(sk, ct_scalar_mul(ct, 3), p)
    assert three.values == tuple(3 * v % T for v in m.values) and three.round_t == 6
    neg = decrypt(sk, ct_scalar_mul(ct, T - 1), p)
    assert neg.values == tuple((-v) % T for v in m.values)
    with pytest.raises(ParameterError):
        ct_scalar_mul(ct, T)


def test_ciphertext_wire(wide):
    p, pk, _ = wide
    ct, _ = encrypt(pk, rand_pt(p, np.random.default_rng(0)), p, np.random.default_rng(1))
    assert len(ct.wire) == p.ciphertext_bytes == 32 + 2 * (32 + 256 * 16)
    assert Ciphertext.from_bytes(ct.wire) == ct


def test_reference_size_ciphertext():
    p = AheParams.create(RingParams(params.REFERENCE_DEGREE, params.Q120))
    assert p.ciphertext_bytes - 32 - 2 * 32 == 2 * 4096 * 16 == 131072


def test_smudge_bound_examples():
    assert smudge_bound(64, 1, 0) == 64
    assert smudge_bound(64, 1024, 40) == 64 * 1024 * 2 ** 40
    with pytest.raises(ParameterError):
        smudge_bound(64, 0, 40)


def test_desk_profile_headroom():
    p = AheParams.create(RingParams(params.DESK_DEGREE, params.Q120))
    bound = check_smudging_headroom(p, 45, 430)
    assert 45 * bound + p.fresh_noise_bound * 430 < p.delta // 2
    with pytest.raises(ConfigError):
        check_smudging_headroom(AheParams.create(RingParams(64, params.Q61)), 45, 430)


def test_partial_decrypt_trivial_sharing(wide):
    p, pk, sk = wide
    ct, _ = encrypt(pk, rand_pt(p, np.random.default_rng(2)), p, np.random.default_rng(3))
    part = partial_decrypt(sk.s, 1, ct.c1, 0, p, np.random.default_rng(0))
    assert part == ring_mul(ct.c1, sk.s, p.ring)


@pytest.fixture(scope="module")
def shared_key(wide):
    p, pk, sk = wide
    group = DlogGroup.for_modulus(p.ring.modulus)
    return share(sk.s.limbs, 45, 18, group, np.random.default_rng(4))


def _partials(p, ss, quorum, ct, bound, rng):
    q = p.ring.modulus
    return [partial_decrypt(RingPoly(p.ring, ss.shares[i]), lagrange_coeff(quorum, i, q), ct.c1,
                            bound, p, rng) for i in quorum]


def test_threshold_error_and_quorums(wide, shared_key):
    p, pk, sk = wide
    rng = np.random.default_rng(5)
    bound = check_smudging_headroom(p, 45, 1)
    m = rand_pt(p, rng)
    ct, _ = encrypt(pk, m, p, rng)
    q28 = list(range(1, 29))
    parts = _partials(p, shared_key, q28, ct, bound, rng)
    err = ring_sub(ring_sum_polys(p, parts), ring_mul(ct.c1, sk.s, p.ring), p.ring)
    assert err.inf_norm() <= 45 * bound
    other = list(range(20, 39))
    assert combine_partials(ct.c2, parts, p) == m
    assert combine_partials(ct.c2, _partials(p, shared_key, other, ct, bound, rng), p) == m


def ring_sum_polys(p, polys):
    from dpagg.ring import ring_sum
    return ring_sum(polys, p.ring)


def test_combine_needs_full_quorum(wide, shared_key):
    p, pk, sk = wide
    rng = np.random.default_rng(6)
    m = rand_pt(p, rng)
    ct, _ = encrypt(pk, m, p, rng)
    quorum = list(range(1, 20))
    parts = _partials(p, shared_key, quorum, ct, check_smudging_headroom(p, 45, 1), rng)
    with pytest.raises(ProtocolError):
        combine_partials(ct.c2, parts[:-1], p, expected=19)
    assert combine_partials(ct.c2, parts[:-1], p) != m
    zero = Plaintext(0, (0,) * p.slots, 1.0)
    zct, _ = encrypt(pk, zero, p, rng)
    assert combine_partials(zct.c2, _partials(p, shared_key, quorum, zct, 1 << 40, rng), p) == zero


def test_num_ciphertexts():
    assert num_ciphertexts(4092, 1024) == 4
    assert num_ciphertexts(4095, 4096) == 1
    assert num_ciphertexts(4096, 4096) == 2


def test_fresh_noise_bound_formula():
    assert fresh_noise_bound(1024, 3.2) == (2 * 1024 + 1) * 19


@given(st.lists(st.integers(0, T - 1), min_size=63, max_size=63),
       st.lists(st.integers(0, T - 1), min_size=63, max_size=63), st.integers(0, 2 ** 32))
def test_additive_homomorphism(m1, m2, seed):
    p = AheParams.create(RingParams(64, params.Q61))
    pk, sk = keygen(p, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    a, _ = encrypt(pk, Plaintext(1, tuple(m1), 1.0), p, rng)
    b, _ = encrypt(pk, Plaintext(2, tuple(m2), 1.0), p, rng)
    got = decrypt(sk, ct_add(a, b), p)
    assert got.round_t == 3
    assert got.values == tuple((x + y) % T for x, y in zip(m1, m2))


@given(st.integers(1, 4096))
def test_noise_growth_bounded(k):
    p = AheParams.create(RingParams(64, params.Q61))
    pk, sk = keygen(p, np.random.default_rng(k))
    rng = np.random.default_rng(k + 7)
    zero = Plaintext(0, (0,) * p.slots, 1.0)
    ct, _ = encrypt(pk, zero, p, rng)
    total = ct_scalar_mul(ct, k)  # worst-case aligned noise for k adds
    assert decrypt(sk, total, p) == zero
    assert decryption_noise(sk, total, [zero] * k, p).inf_norm() <= k * p.fresh_noise_bound
