/*
 * Modular kernels over Z_q for odd q < 2^127.
 *
 * Residues are stored as pairs of little-endian 64-bit limbs (lo, hi) so a
 * (n, 2) uint64 array has the same bytes as the 16-byte coefficient wire
 * format.  Products use Montgomery multiplication with R = 2^128.
 */
#ifndef DPAGG_RINGCORE_H
#define DPAGG_RINGCORE_H

#include <stdint.h>
#include <stddef.h>

typedef unsigned __int128 u128;

typedef struct {
    u128 q;
    u128 qneg;  /* -q^{-1} mod 2^128 */
    u128 r2;    /* 2^256 mod q */
} mod_ctx;

static inline u128 rc_load(const uint64_t *a, size_t i) {
    return ((u128)a[2 * i + 1] << 64) | (u128)a[2 * i];
}

static inline void rc_store(uint64_t *a, size_t i, u128 v) {
    a[2 * i] = (uint64_t)v;
    a[2 * i + 1] = (uint64_t)(v >> 64);
}

static inline void rc_mul_wide(u128 a, u128 b, u128 *hi, u128 *lo) {
    uint64_t a0 = (uint64_t)a, a1 = (uint64_t)(a >> 64);
    uint64_t b0 = (uint64_t)b, b1 = (uint64_t)(b >> 64);
    u128 p00 = (u128)a0 * b0;
    u128 p01 = (u128)a0 * b1;
    u128 p10 = (u128)a1 * b0;
    u128 p11 = (u128)a1 * b1;
    u128 mid = (p00 >> 64) + (uint64_t)p01 + (uint64_t)p10;
    *lo = (mid << 64) | (uint64_t)p00;
    *hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
}

/* a * b * 2^-128 mod q, inputs in [0, q). */
static inline u128 rc_mont(u128 a, u128 b, const mod_ctx *c) {
    u128 thi, tlo, mhi, mlo;
    rc_mul_wide(a, b, &thi, &tlo);
    u128 m = tlo * c->qneg;
    rc_mul_wide(m, c->q, &mhi, &mlo);
    u128 u = thi + mhi + (tlo != 0);
    return u >= c->q ? u - c->q : u;
}

static inline u128 rc_add(u128 a, u128 b, u128 q) {
    u128 s = a + b;
    return s >= q ? s - q : s;
}

static inline u128 rc_sub(u128 a, u128 b, u128 q) {
    return a >= b ? a - b : a + (q - b);
}

static inline u128 rc_to_mont(u128 a, const mod_ctx *c) { return rc_mont(a, c->r2, c); }

static void rc_vec_add(const uint64_t *a, const uint64_t *b, uint64_t *out, size_t n, const mod_ctx *c) {
    for (size_t i = 0; i < n; i++)
        rc_store(out, i, rc_add(rc_load(a, i), rc_load(b, i), c->q));
}

static void rc_vec_sub(const uint64_t *a, const uint64_t *b, uint64_t *out, size_t n, const mod_ctx *c) {
    for (size_t i = 0; i < n; i++)
        rc_store(out, i, rc_sub(rc_load(a, i), rc_load(b, i), c->q));
}

static void rc_vec_scale(const uint64_t *a, u128 k, uint64_t *out, size_t n, const mod_ctx *c) {
    u128 km = rc_to_mont(k, c);
    for (size_t i = 0; i < n; i++)
        rc_store(out, i, rc_mont(rc_load(a, i), km, c));
}

static void rc_vec_mul(const uint64_t *a, const uint64_t *b, uint64_t *out, size_t n, const mod_ctx *c) {
    for (size_t i = 0; i < n; i++) {
        u128 p = rc_mont(rc_load(a, i), rc_load(b, i), c);
        rc_store(out, i, rc_mont(p, c->r2, c));
    }
}

static u128 rc_vec_dot(const uint64_t *a, const uint64_t *b, size_t n, const mod_ctx *c) {
    u128 acc = 0;
    for (size_t i = 0; i < n; i++)
        acc = rc_add(acc, rc_mont(rc_load(a, i), rc_load(b, i), c), c->q);
    return rc_mont(acc, c->r2, c);
}

/* Horner evaluation of sum a[i] x^i. */
static u128 rc_eval(const uint64_t *a, size_t n, u128 x, const mod_ctx *c) {
    u128 xm = rc_to_mont(x, c);
    u128 acc = 0;
    for (size_t i = n; i-- > 0;)
        acc = rc_add(rc_mont(acc, xm, c), rc_load(a, i), c->q);
    return acc;
}

/* Schoolbook product modulo x^n + 1. */
static void rc_negacyclic_schoolbook(const uint64_t *a, const uint64_t *b, uint64_t *out, size_t n,
                                     const mod_ctx *c) {
    for (size_t k = 0; k < n; k++) rc_store(out, k, 0);
    for (size_t i = 0; i < n; i++) {
        u128 ai = rc_load(a, i);
        if (ai == 0) continue;
        for (size_t j = 0; j < n; j++) {
            u128 p = rc_mont(ai, rc_load(b, j), c);
            size_t k = i + j;
            if (k < n)
                rc_store(out, k, rc_add(rc_load(out, k), p, c->q));
            else
                rc_store(out, k - n, rc_sub(rc_load(out, k - n), p, c->q));
        }
    }
    for (size_t k = 0; k < n; k++) rc_store(out, k, rc_mont(rc_load(out, k), c->r2, c));
}

/*
 * Negacyclic NTT, Cooley-Tukey forward and Gentleman-Sande inverse.
 * psi_rev[k] = psi^{bitrev(k)} * R mod q, ipsi_rev[k] = psi^{-bitrev(k)} * R mod q.
 */
static void rc_ntt_forward(u128 *a, size_t n, const uint64_t *psi_rev, const mod_ctx *c) {
    size_t t = n;
    for (size_t m = 1; m < n; m <<= 1) {
        t >>= 1;
        for (size_t i = 0; i < m; i++) {
            size_t j1 = 2 * i * t;
            u128 s = rc_load(psi_rev, m + i);
            for (size_t j = j1; j < j1 + t; j++) {
                u128 u = a[j];
                u128 v = rc_mont(a[j + t], s, c);
                a[j] = rc_add(u, v, c->q);
                a[j + t] = rc_sub(u, v, c->q);
            }
        }
    }
}

static void rc_ntt_inverse(u128 *a, size_t n, const uint64_t *ipsi_rev, const mod_ctx *c) {
    size_t t = 1;
    for (size_t m = n; m > 1; m >>= 1) {
        size_t h = m >> 1;
        size_t j1 = 0;
        for (size_t i = 0; i < h; i++) {
            u128 s = rc_load(ipsi_rev, h + i);
            for (size_t j = j1; j < j1 + t; j++) {
                u128 u = a[j];
                u128 v = a[j + t];
                a[j] = rc_add(u, v, c->q);
                a[j + t] = rc_mont(rc_sub(u, v, c->q), s, c);
            }
            j1 += 2 * t;
        }
        t <<= 1;
    }
}

/* scratch must hold 2n u128 values; n_scale = n^{-1} * R^2 mod q. */
static void rc_negacyclic_ntt(const uint64_t *a, const uint64_t *b, uint64_t *out, size_t n,
                              const uint64_t *psi_rev, const uint64_t *ipsi_rev, u128 n_scale,
                              const mod_ctx *c, u128 *scratch) {
    u128 *fa = scratch, *fb = scratch + n;
    for (size_t i = 0; i < n; i++) {
        fa[i] = rc_load(a, i);
        fb[i] = rc_load(b, i);
    }
    rc_ntt_forward(fa, n, psi_rev, c);
    rc_ntt_forward(fb, n, psi_rev, c);
    for (size_t i = 0; i < n; i++) fa[i] = rc_mont(fa[i], fb[i], c);
    rc_ntt_inverse(fa, n, ipsi_rev, c);
    for (size_t i = 0; i < n; i++) rc_store(out, i, rc_mont(fa[i], n_scale, c));
}

#endif
