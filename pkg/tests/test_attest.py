import numpy as np
import pytest

from dpagg import params
from dpagg.ahe import AheParams, encode, encrypt, keygen
from dpagg.attest import (TOKEN_BYTES, Attestation, Authority, Witness, derive_signing_key, prove,
                          public_bytes, quantize_toward_zero, noise_share_bound, verify)
from dpagg.ring import RingParams

SCALE = 1024.0


@pytest.fixture(scope="module")
def setup():
    p = AheParams.create(RingParams(64, params.Q61))
    pk, _ = keygen(p, np.random.default_rng(0))
    auth = Authority(b"seed", pk, p, SCALE)
    return p, pk, auth


def make(setup, update, round_t=4, bound=1.0, seed=1):
    p, pk, auth = setup
    pt = encode(round_t, update, SCALE, p)
    ct, rand = encrypt(pk, pt, p, np.random.default_rng(seed))
    stmt = auth.statement(round_t, bound)
    return stmt, ct, prove(stmt, ct, Witness(pt, rand), auth)


def unit(dim, norm, seed=0):
    v = np.random.default_rng(seed).normal(size=dim)
    return v / np.linalg.norm(v) * norm


def test_honest_accepted(setup):
    stmt, ct, att = make(setup, quantize_toward_zero(unit(20, 1.0), SCALE))
    assert len(att) == TOKEN_BYTES
    assert verify(stmt, ct, att, setup[2].public_key)


def test_norm_above_bound_rejected(setup):
    stmt, ct, att = make(setup, unit(20, 1.01))
    assert not verify(stmt, ct, att, setup[2].public_key)


def test_stale_round_rejected(setup):
    stmt, ct, att = make(setup, quantize_toward_zero(unit(10, 0.5), SCALE), round_t=3)
    assert verify(stmt, ct, att, setup[2].public_key)
    later = setup[2].statement(4, 1.0)
    assert not verify(later, ct, att, setup[2].public_key)


def test_bound_in_statement_matters(setup):
    stmt, ct, att = make(setup, quantize_toward_zero(unit(10, 0.5), SCALE))
    assert not verify(setup[2].statement(4, 2.0), ct, att, setup[2].public_key)


def test_token_bitflips_rejected(setup):
    stmt, ct, att = make(setup, quantize_toward_zero(unit(10, 0.5), SCALE))
    key = setup[2].public_key
    rng = np.random.default_rng(3)
    tok = bytearray(att.token)
    for pos in rng.integers(0, len(tok) * 8, 10_000):
        bad = bytearray(tok)
        bad[pos // 8] ^= 1 << (pos % 8)
        assert not verify(stmt, ct, Attestation(att.scheme, bytes(bad)), key)
    assert not verify(stmt, ct, Attestation(att.scheme, bytes(tok[:-1])), key)
    assert not verify(stmt, ct, Attestation("other", bytes(tok)), key)


def test_other_ciphertext_rejected(setup):
    stmt, ct, att = make(setup, [0.25], seed=1)
    _, ct2, _ = make(setup, [0.25], seed=2)
    assert not verify(stmt, ct2, att, setup[2].public_key)


def test_wrong_witness_rejected(setup):
    p, pk, auth = setup
    pt = encode(4, [0.1], SCALE, p)
    ct, rand = encrypt(pk, pt, p, np.random.default_rng(1))
    other = encode(4, [0.2], SCALE, p)
    stmt = auth.statement(4, 1.0)
    assert not verify(stmt, ct, prove(stmt, ct, Witness(other, rand), auth), auth.public_key)


def test_foreign_authority_rejected(setup):
    stmt, ct, att = make(setup, [0.1])
    other = derive_signing_key(b"elsewhere", b"attestation-authority").public_key()
    assert not verify(stmt, ct, att, other)
    assert len(public_bytes(other)) == 32


def test_quantize_toward_zero():
    rng = np.random.default_rng(5)
    for _ in range(200):
        v = unit(30, 1.0, int(rng.integers(1 << 30)))
        qv = quantize_toward_zero(v, SCALE)
        assert np.linalg.norm(qv) <= 1.0
        assert np.all(np.abs(qv) <= np.abs(v))
        assert np.all(np.abs(v - qv) < 1 / SCALE)
        assert np.allclose(qv * SCALE, np.round(qv * SCALE))


def test_noise_share_bound_covers_draws():
    rng = np.random.default_rng(6)
    std, dim = 0.05, 4000
    b = noise_share_bound(std, dim)
    assert all(np.linalg.norm(rng.normal(0, std, dim)) <= b for _ in range(500))
