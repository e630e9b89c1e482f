# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Z_q vector kernels.  Mirrors the API of ``dpagg._pyring``."""

from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free

import numpy as np

cdef extern from "_ringcore.h":
    ctypedef unsigned long long u128 "unsigned __int128"
    ctypedef struct mod_ctx:
        u128 q
        u128 qneg
        u128 r2
    void rc_vec_add(const uint64_t *a, const uint64_t *b, uint64_t *out, size_t n, const mod_ctx *c) nogil
    void rc_vec_sub(const uint64_t *a, const uint64_t *b, uint64_t *out, size_t n, const mod_ctx *c) nogil
    void rc_vec_scale(const uint64_t *a, u128 k, uint64_t *out, size_t n, const mod_ctx *c) nogil
    void rc_vec_mul(const uint64_t *a, const uint64_t *b, uint64_t *out, size_t n, const mod_ctx *c) nogil
    u128 rc_vec_dot(const uint64_t *a, const uint64_t *b, size_t n, const mod_ctx *c) nogil
    u128 rc_eval(const uint64_t *a, size_t n, u128 x, const mod_ctx *c) nogil
    void rc_negacyclic_schoolbook(const uint64_t *a, const uint64_t *b, uint64_t *out, size_t n,
                                  const mod_ctx *c) nogil
    void rc_negacyclic_ntt(const uint64_t *a, const uint64_t *b, uint64_t *out, size_t n,
                           const uint64_t *psi_rev, const uint64_t *ipsi_rev, u128 n_scale,
                           const mod_ctx *c, u128 *scratch) nogil

BACKEND = "compiled"

cdef inline u128 _u128(object v):
    return (<u128>(<uint64_t>(v >> 64)) << 64) | <u128>(<uint64_t>(v & 0xFFFFFFFFFFFFFFFF))

cdef inline object _pyint(u128 v):
    return (int(<uint64_t>(v >> 64)) << 64) | int(<uint64_t>v)

cdef inline void _ctx(object mod, mod_ctx *c):
    c.q = _u128(mod.q)
    c.qneg = _u128(mod.qneg)
    c.r2 = _u128(mod.r2)


def add(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b, mod):
    cdef mod_ctx c
    _ctx(mod, &c)
    out = np.empty((a.shape[0], 2), dtype=np.uint64)
    cdef uint64_t[:, ::1] o = out
    if a.shape[0] != b.shape[0]:
        raise ValueError("length mismatch")
    if a.shape[0]:
        with nogil:
            rc_vec_add(&a[0, 0], &b[0, 0], &o[0, 0], a.shape[0], &c)
    return out


def sub(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b, mod):
    cdef mod_ctx c
    _ctx(mod, &c)
    out = np.empty((a.shape[0], 2), dtype=np.uint64)
    cdef uint64_t[:, ::1] o = out
    if a.shape[0] != b.shape[0]:
        raise ValueError("length mismatch")
    if a.shape[0]:
        with nogil:
            rc_vec_sub(&a[0, 0], &b[0, 0], &o[0, 0], a.shape[0], &c)
    return out


def scale(const uint64_t[:, ::1] a, k, mod):
    cdef mod_ctx c
    _ctx(mod, &c)
    cdef u128 kk = _u128(k % mod.q)
    out = np.empty((a.shape[0], 2), dtype=np.uint64)
    cdef uint64_t[:, ::1] o = out
    if a.shape[0]:
        with nogil:
            rc_vec_scale(&a[0, 0], kk, &o[0, 0], a.shape[0], &c)
    return out


def mul_pointwise(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b, mod):
    cdef mod_ctx c
    _ctx(mod, &c)
    out = np.empty((a.shape[0], 2), dtype=np.uint64)
    cdef uint64_t[:, ::1] o = out
    if a.shape[0] != b.shape[0]:
        raise ValueError("length mismatch")
    if a.shape[0]:
        with nogil:
            rc_vec_mul(&a[0, 0], &b[0, 0], &o[0, 0], a.shape[0], &c)
    return out


def dot(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b, mod):
    cdef mod_ctx c
    _ctx(mod, &c)
    cdef u128 r = 0
    if a.shape[0] != b.shape[0]:
        raise ValueError("length mismatch")
    if a.shape[0]:
        with nogil:
            r = rc_vec_dot(&a[0, 0], &b[0, 0], a.shape[0], &c)
    return _pyint(r)


def evaluate(const uint64_t[:, ::1] a, x, mod):
    cdef mod_ctx c
    _ctx(mod, &c)
    cdef u128 xx = _u128(x)
    cdef u128 r = 0
    if a.shape[0]:
        with nogil:
            r = rc_eval(&a[0, 0], a.shape[0], xx, &c)
    return _pyint(r)


def negacyclic_mul(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b, mod, tables=None):
    """Product modulo (x^n + 1, q); uses the NTT when ``tables`` is given."""
    cdef mod_ctx c
    _ctx(mod, &c)
    cdef size_t n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError("length mismatch")
    out = np.empty((n, 2), dtype=np.uint64)
    cdef uint64_t[:, ::1] o = out
    cdef const uint64_t[:, ::1] psi
    cdef const uint64_t[:, ::1] ipsi
    cdef u128 n_scale
    cdef u128 *scratch
    if n == 0:
        return out
    if tables is None:
        with nogil:
            rc_negacyclic_schoolbook(&a[0, 0], &b[0, 0], &o[0, 0], n, &c)
        return out
    psi = tables.psi_rev
    ipsi = tables.ipsi_rev
    n_scale = _u128(tables.n_scale)
    scratch = <u128 *> malloc(2 * n * sizeof(u128))
    if scratch == NULL:
        raise MemoryError()
    try:
        with nogil:
            rc_negacyclic_ntt(&a[0, 0], &b[0, 0], &o[0, 0], n, &psi[0, 0], &ipsi[0, 0],
                              n_scale, &c, scratch)
    finally:
        free(scratch)
    return out
