# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: sequential PL sampling and PL-Rank-3 statistics.

Mirrors fairpl._kernels_py; rankings are bit-identical to the pure backend
because both walk the same cumulative sums over the same pre-drawn uniforms.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

cdef double Z_RECOMPUTE_RATIO = 1e-6


def sample_pl_rankings(weights, int slots, uniforms):
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef const double[::1] w = weights
    cdef const double[:, ::1] u = uniforms
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t m = u.shape[0]
    if slots > n:
        raise ValueError(f"slots {slots} > pool size {n}")
    out_arr = np.empty((m, slots), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    if m == 0 or slots == 0:
        return out_arr

    alive_arr = np.empty(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] alive = alive_arr
    cdef Py_ssize_t s, t, i, pick, last_alive
    cdef double acc, total, target
    for s in range(m):
        for i in range(n):
            alive[i] = 1
        for t in range(slots):
            total = 0.0
            for i in range(n):
                if alive[i]:
                    total += w[i]
            target = u[s, t] * total
            acc = 0.0
            pick = -1
            last_alive = -1
            for i in range(n):
                if alive[i]:
                    acc += w[i]
                    last_alive = i
                    if acc > target:
                        pick = i
                        break
            if pick < 0:
                pick = last_alive
            out[s, t] = pick
            alive[pick] = 0
    return out_arr


def plrank3_accumulate(weights, rho, theta_flat, rank_flat, offsets, out):
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    rho = np.ascontiguousarray(rho, dtype=np.float64)
    theta_flat = np.ascontiguousarray(theta_flat, dtype=np.float64)
    rank_flat = np.ascontiguousarray(rank_flat, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)

    cdef const double[::1] w = weights
    cdef const double[::1] r = rho
    cdef const double[::1] th = theta_flat
    cdef const cnp.int64_t[::1] chosen = rank_flat
    cdef const cnp.int64_t[::1] off = offsets
    cdef double[::1] acc_out = out

    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t n_samples = off.shape[0] - 1
    cdef Py_ssize_t max_k = 0
    cdef Py_ssize_t s, t, i, lo, hi, kk, d
    for s in range(n_samples):
        kk = off[s + 1] - off[s]
        if kk > max_k:
            max_k = kk
    if max_k == 0:
        return

    zbuf_arr = np.empty(max_k, dtype=np.float64)
    sfx_arr = np.empty(max_k + 1, dtype=np.float64)
    dr_arr = np.empty(max_k, dtype=np.float64)
    ri_arr = np.empty(max_k, dtype=np.float64)
    placed_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] z = zbuf_arr
    cdef double[::1] sfx = sfx_arr
    cdef double[::1] dr = dr_arr
    cdef double[::1] ri = ri_arr
    cdef cnp.uint8_t[::1] placed = placed_arr

    cdef double total = 0.0
    for i in range(n):
        total += w[i]
    cdef double floor = Z_RECOMPUTE_RATIO * total

    cdef double acc, dr_end, ri_end
    for s in range(n_samples):
        lo = off[s]
        hi = off[s + 1]
        kk = hi - lo
        if kk == 0:
            continue
        acc = total
        for t in range(kk):
            if acc < floor:
                # recompute from scratch over the remaining pool; subtracting
                # placed weights from the total would cancel all over again
                for i in range(t):
                    placed[chosen[lo + i]] = 1
                acc = 0.0
                for i in range(n):
                    if not placed[i]:
                        acc += w[i]
                for i in range(t):
                    placed[chosen[lo + i]] = 0
            z[t] = acc
            acc -= w[chosen[lo + t]]

        sfx[kk] = 0.0
        for t in range(kk - 1, -1, -1):
            sfx[t] = sfx[t + 1] + th[lo + t] * r[chosen[lo + t]]

        acc = 0.0
        for t in range(kk):
            acc += th[lo + t] / z[t]
            dr[t] = acc
        acc = 0.0
        for t in range(kk):
            acc += sfx[t] / z[t]
            ri[t] = acc
        dr_end = dr[kk - 1]
        ri_end = ri[kk - 1]

        for d in range(n):
            acc_out[d] += w[d] * (r[d] * dr_end - ri_end)
        for t in range(kk):
            d = chosen[lo + t]
            acc_out[d] += sfx[t + 1] + w[d] * (
                r[d] * (dr[t] - dr_end) - (ri[t] - ri_end))
