"""Published parameter constants and named profiles.

Q120 (0xfffffffffffffffffffffffff0c001) is the largest 120-bit prime with
Q = 1 (mod 2^14), so the negacyclic NTT exists for every N up to 8192.  Q61
is the analogous 61-bit prime for quick tests.  Each ciphertext modulus has
a Schnorr group of order Q for Feldman commitments, with p_group = k*Q + 1
for the smallest even k.
"""
from __future__ import annotations

Q120 = 1329227995784915872903807060279345153
Q61 = 2305843009213317121
Q97 = 97

# (modulus) -> (p_group, generator of the order-Q subgroup)
SCHNORR_GROUPS = {
    Q120: (55827575822966466661959896531732496427, 4398046511104),
    Q61: (106068778423812587567, 70368744177664),
    Q97: (389, 16),
}

T_PLAIN = (1 << 20) + 7
FIXED_POINT_SCALE = 1 << 10
GAUSSIAN_STDDEV = 3.2
SMUDGE_LAMBDA = 40

REFERENCE_DEGREE = 4096
DESK_DEGREE = 1024

COMMITTEE_DEFAULTS = {
    "master": (18, 45),
    "dp_noise": (40, 280),
    "decryption": (18, 45),
}
NUM_DECRYPTION_COMMITTEES = 10
SPOT_CHECKS = 6
