# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-chunk trajectory loops.

Each function advances one chunk of pre-drawn batch indices / noise rows
and mirrors the generic python driver update order operation for
operation, so both backends integrate the same discrete process.  A
return value of (cursor, -1) means the chunk completed; (cursor, step)
flags the first step that produced a non-finite parameter.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite, sqrt

ctypedef cnp.int64_t i64


cdef inline bint _record(long step, long burn, long thin) noexcept nogil:
    return step > burn and (step - burn) % thin == 0


def radial_chunk(double[::1] theta, double eta, double coef,
                 double[:, ::1] noise, long done, long burn, long thin,
                 double[:, ::1] snap, long cursor):
    cdef long K = noise.shape[0]
    cdef long n = theta.shape[0]
    cdef long k, j, step
    cdef double s, r, g, tmp
    cdef bint ok
    for k in range(K):
        step = done + k + 1
        s = 0.0
        for j in range(n):
            s += theta[j] * theta[j]
        r = sqrt(s)
        ok = True
        for j in range(n):
            g = (1.0 - 1.0 / r) * theta[j] if r > 0.0 else 0.0
            tmp = theta[j] - eta * g
            theta[j] = tmp + coef * noise[k, j]
            if not isfinite(theta[j]):
                ok = False
        if not ok:
            return cursor, step
        if _record(step, burn, thin):
            for j in range(n):
                snap[cursor, j] = theta[j]
            cursor += 1
    return cursor, -1


def linear_chunk(double[::1] theta, double eta,
                 double[:, ::1] Xp, double[:, ::1] Xf, double[::1] y,
                 i64[::1] gid, long layout, long n_plain, long d, long G,
                 i64[:, ::1] idx, long done, long burn, long thin,
                 double[:, ::1] snap, long cursor):
    """layout 0: w = theta; 1: w = u*v; 2: w = s[gid]*t."""
    cdef long K = idx.shape[0]
    cdef long B = idx.shape[1]
    cdef long k, b, j, p, step
    cdef long i
    cdef double pred, res
    cdef bint ok
    w_buf = np.empty(d, dtype=np.float64)
    gw_buf = np.empty(d, dtype=np.float64)
    gc_buf = np.empty(n_plain, dtype=np.float64)
    gs_buf = np.empty(G if G > 0 else 1, dtype=np.float64)
    cdef double[::1] w = w_buf
    cdef double[::1] gw = gw_buf
    cdef double[::1] gc = gc_buf
    cdef double[::1] gs = gs_buf

    for k in range(K):
        step = done + k + 1
        if layout == 0:
            for j in range(d):
                w[j] = theta[n_plain + j]
        elif layout == 1:
            for j in range(d):
                w[j] = theta[n_plain + j] * theta[n_plain + d + j]
        else:
            for j in range(d):
                w[j] = theta[n_plain + gid[j]] * theta[n_plain + G + j]

        for j in range(d):
            gw[j] = 0.0
        for p in range(n_plain):
            gc[p] = 0.0
        for b in range(B):
            i = idx[k, b]
            pred = 0.0
            for j in range(d):
                pred += Xf[i, j] * w[j]
            for p in range(n_plain):
                pred += Xp[i, p] * theta[p]
            res = pred - y[i]
            for j in range(d):
                gw[j] += Xf[i, j] * res
            for p in range(n_plain):
                gc[p] += Xp[i, p] * res
        for j in range(d):
            gw[j] /= B
        for p in range(n_plain):
            gc[p] /= B

        for p in range(n_plain):
            theta[p] -= eta * gc[p]
        if layout == 0:
            for j in range(d):
                theta[n_plain + j] -= eta * gw[j]
        elif layout == 1:
            # u update needs old v and vice versa; w holds u*v so recompute
            for j in range(d):
                res = theta[n_plain + j]
                theta[n_plain + j] -= eta * (gw[j] * theta[n_plain + d + j])
                theta[n_plain + d + j] -= eta * (gw[j] * res)
        else:
            for j in range(G):
                gs[j] = 0.0
            for j in range(d):
                gs[gid[j]] += gw[j] * theta[n_plain + G + j]
            for j in range(d):
                theta[n_plain + G + j] -= eta * (gw[j] * theta[n_plain + gid[j]])
            for j in range(G):
                theta[n_plain + j] -= eta * gs[j]

        ok = True
        for j in range(theta.shape[0]):
            if not isfinite(theta[j]):
                ok = False
                break
        if not ok:
            return cursor, step
        if _record(step, burn, thin):
            for j in range(theta.shape[0]):
                snap[cursor, j] = theta[j]
            cursor += 1
    return cursor, -1


def masked_mf_chunk(double[::1] theta, double eta,
                    i64[::1] rows, i64[::1] cols, double[::1] vals,
                    long n_rows, long n_cols, long r,
                    i64[:, ::1] idx, long done, long burn, long thin,
                    double[:, ::1] snap, long cursor):
    """theta = [vec U (n_rows x r), vec V (n_cols x r)], entries U V^T."""
    cdef long K = idx.shape[0]
    cdef long B = idx.shape[1]
    cdef long nr = n_rows * r
    cdef long k, b, j, step, e, ri, ci
    cdef double res
    cdef bint ok
    res_buf = np.empty(B, dtype=np.float64)
    gU_buf = np.empty(nr, dtype=np.float64)
    gV_buf = np.empty(n_cols * r, dtype=np.float64)
    cdef double[::1] resid = res_buf
    cdef double[::1] gU = gU_buf
    cdef double[::1] gV = gV_buf

    for k in range(K):
        step = done + k + 1
        for j in range(nr):
            gU[j] = 0.0
        for j in range(n_cols * r):
            gV[j] = 0.0
        for b in range(B):
            e = idx[k, b]
            ri = rows[e]
            ci = cols[e]
            res = -vals[e]
            for j in range(r):
                res += theta[ri * r + j] * theta[nr + ci * r + j]
            resid[b] = res
        for b in range(B):
            e = idx[k, b]
            ri = rows[e]
            ci = cols[e]
            for j in range(r):
                gU[ri * r + j] += resid[b] * theta[nr + ci * r + j] / B
                gV[ci * r + j] += resid[b] * theta[ri * r + j] / B
        for j in range(nr):
            theta[j] -= eta * gU[j]
        for j in range(n_cols * r):
            theta[nr + j] -= eta * gV[j]

        ok = True
        for j in range(theta.shape[0]):
            if not isfinite(theta[j]):
                ok = False
                break
        if not ok:
            return cursor, step
        if _record(step, burn, thin):
            for j in range(theta.shape[0]):
                snap[cursor, j] = theta[j]
            cursor += 1
    return cursor, -1
