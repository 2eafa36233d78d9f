# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint8_t, int8_t

cnp.import_array()

DEF U_J1 = 0
DEF U_J2 = 1
DEF U_CAT = 2
DEF U_DET = 3
DEF U_JOINT = 4
DEF U_EXTRA = 6
DEF U_ALICE = 18
DEF U_BOB = 22

cdef uint8_t BIT_A = 1, BIT_B = 2, BIT_C = 4, BIT_D = 8
cdef uint8_t BIT_E = 16, BIT_F = 32, BIT_G = 64, BIT_H = 128


cdef inline uint8_t det_bit(int arm, int pol) nogil:
    if arm == 0:
        return BIT_A if pol == 0 else BIT_B
    return BIT_C if pol == 0 else BIT_D


def resolve_pulses(const int64_t[:, :] cls, const double[:, :] u, double m,
                   const double[:, :] pj, const double[:] pa_plus, const double[:] pb_plus):
    cdef Py_ssize_t n = cls.shape[0]
    mask_arr = np.zeros(n, dtype=np.uint8)
    cat_arr = np.full(n, -1, dtype=np.int8)
    cdef uint8_t[:] mask = mask_arr
    cdef int8_t[:] cat = cat_arr
    cdef double p_bunch = 0.5 + 0.25 * (1.0 + m)
    cdef Py_ssize_t i
    cdef int s1b, s1o, s1a, s2b, s2o, s2a, n1, n2, j1, j2, kind, d, pol, arm, k, r, outv, has_a, has_b
    cdef int alice_pol[4]
    cdef int bob_pol[4]
    cdef int alice_out[4]
    cdef int bob_out[4]
    cdef double uc, ud, uj, c0, c1, c2, p_plus
    cdef uint8_t bits
    with nogil:
        for i in range(n):
            s1b = <int>cls[i, 0]; s1o = <int>cls[i, 1]; s1a = <int>cls[i, 2]
            s2b = <int>cls[i, 3]; s2o = <int>cls[i, 4]; s2a = <int>cls[i, 5]
            n1 = s1b + s1o
            n2 = s2b + s2o
            bits = 0
            for k in range(4):
                alice_pol[k] = -1; bob_pol[k] = -1; alice_out[k] = -1; bob_out[k] = -1
            j1 = -1
            j2 = -1
            if n1 > 0 and n2 > 0:
                j1 = <int>(u[i, U_J1] * n1)
                j2 = <int>(u[i, U_J2] * n2)
                uc = u[i, U_CAT]
                ud = u[i, U_DET]
                has_a = j1 < s1b
                has_b = j2 < s2b
                if uc < 0.5:
                    kind = 0 if uc < 0.25 else 1
                    cat[i] = kind
                    if kind == 0:
                        bits |= (BIT_A | BIT_D) if ud < 0.5 else (BIT_B | BIT_C)
                    else:
                        bits |= (BIT_A | BIT_B) if ud < 0.5 else (BIT_C | BIT_D)
                    uj = u[i, U_JOINT]
                    if has_a and has_b:
                        c0 = pj[kind, 0]
                        c1 = c0 + pj[kind, 1]
                        c2 = c1 + pj[kind, 2]
                        if uj < c0:
                            alice_out[j1] = 0; bob_out[j2] = 0
                        elif uj < c1:
                            alice_out[j1] = 0; bob_out[j2] = 1
                        elif uj < c2:
                            alice_out[j1] = 1; bob_out[j2] = 0
                        else:
                            alice_out[j1] = 1; bob_out[j2] = 1
                    elif has_a:
                        alice_out[j1] = 0 if uj < 0.5 else 1
                    elif has_b:
                        bob_out[j2] = 0 if uj < 0.5 else 1
                else:
                    if uc < p_bunch:
                        cat[i] = 2
                        d = <int>(ud * 4)
                        if d > 3:
                            d = 3
                        bits |= <uint8_t>(1 << d)
                        pol = d & 1
                    else:
                        cat[i] = 3
                        pol = 0 if ud < 0.5 else 1
                        bits |= (BIT_A | BIT_C) if pol == 0 else (BIT_B | BIT_D)
                    if has_a:
                        alice_pol[j1] = 1 - pol
                    if has_b:
                        bob_pol[j2] = 1 - pol
            r = 0
            for k in range(n1):
                if k == j1:
                    continue
                arm = 0 if u[i, U_EXTRA + 2 * r] < 0.5 else 1
                pol = 0 if u[i, U_EXTRA + 2 * r + 1] < 0.5 else 1
                bits |= det_bit(arm, pol)
                if k < s1b:
                    alice_pol[k] = 1 - pol
                r += 1
            for k in range(n2):
                if k == j2:
                    continue
                arm = 0 if u[i, U_EXTRA + 2 * r] < 0.5 else 1
                pol = 0 if u[i, U_EXTRA + 2 * r + 1] < 0.5 else 1
                bits |= det_bit(arm, pol)
                if k < s2b:
                    bob_pol[k] = 1 - pol
                r += 1
            for k in range(s1b + s1a):
                outv = alice_out[k] if k < 4 else -1
                if outv < 0:
                    pol = alice_pol[k] if k < s1b else -1
                    p_plus = 0.5 if pol < 0 else pa_plus[pol]
                    outv = 0 if u[i, U_ALICE + k] < p_plus else 1
                bits |= BIT_E if outv == 0 else BIT_F
            for k in range(s2b + s2a):
                outv = bob_out[k] if k < 4 else -1
                if outv < 0:
                    pol = bob_pol[k] if k < s2b else -1
                    p_plus = 0.5 if pol < 0 else pb_plus[pol]
                    outv = 0 if u[i, U_BOB + k] < p_plus else 1
                bits |= BIT_G if outv == 0 else BIT_H
            mask[i] = bits
    return mask_arr, cat_arr


cdef inline int bsm_kind(int ci, int cj) nogil:
    cdef int lo = ci if ci < cj else cj
    cdef int hi = cj if ci < cj else ci
    if (lo == 0 and hi == 3) or (lo == 1 and hi == 2):
        return 0
    if (lo == 0 and hi == 1) or (lo == 2 and hi == 3):
        return 1
    return -1


def pair_bsm(const int64_t[:] tags, const uint8_t[:] chans, int64_t window):
    cdef Py_ssize_t n = tags.shape[0]
    used_arr = np.zeros(n, dtype=np.uint8)
    cdef uint8_t[:] used = used_arr
    out_t = np.empty(n // 2 + 1, dtype=np.int64)
    out_k = np.empty(n // 2 + 1, dtype=np.int8)
    out_i = np.empty(n // 2 + 1, dtype=np.int64)
    out_j = np.empty(n // 2 + 1, dtype=np.int64)
    cdef int64_t[:] ot = out_t, oi = out_i, oj = out_j
    cdef int8_t[:] ok = out_k
    cdef Py_ssize_t i, j, cnt = 0
    cdef int kind
    with nogil:
        for i in range(n):
            if used[i] or chans[i] > 3:
                continue
            j = i + 1
            while j < n and tags[j] - tags[i] <= window:
                if not used[j] and chans[j] <= 3:
                    kind = bsm_kind(chans[i], chans[j])
                    if kind >= 0:
                        used[i] = 1
                        used[j] = 1
                        ot[cnt] = tags[i]
                        ok[cnt] = kind
                        oi[cnt] = i
                        oj[cnt] = j
                        cnt += 1
                        break
                j += 1
    return out_t[:cnt].copy(), out_k[:cnt].copy(), out_i[:cnt].copy(), out_j[:cnt].copy()


def match_greedy(const double[:] ta, const double[:] tb, double lo, double hi):
    cdef Py_ssize_t na = ta.shape[0], nb = tb.shape[0]
    used_arr = np.zeros(nb, dtype=np.uint8)
    cdef uint8_t[:] used = used_arr
    ia_arr = np.empty(na, dtype=np.int64)
    ib_arr = np.empty(na, dtype=np.int64)
    cdef int64_t[:] ia = ia_arr, ib = ib_arr
    cdef Py_ssize_t i, j, start = 0, cnt = 0
    cdef double lo_t, hi_t
    with nogil:
        for i in range(na):
            lo_t = ta[i] + lo
            hi_t = ta[i] + hi
            while start < nb and tb[start] < lo_t:
                start += 1
            j = start
            while j < nb and tb[j] <= hi_t:
                if not used[j]:
                    used[j] = 1
                    ia[cnt] = i
                    ib[cnt] = j
                    cnt += 1
                    break
                j += 1
    return ia_arr[:cnt].copy(), ib_arr[:cnt].copy()


def pair_diffs(const double[:] t_local, const double[:] t_remote, double lo, double hi):
    cdef Py_ssize_t nl = t_local.shape[0], nr = t_remote.shape[0]
    cdef Py_ssize_t i, j, start = 0, cnt = 0
    cdef double d
    # first pass counts, second fills
    with nogil:
        for i in range(nl):
            while start < nr and t_remote[start] - t_local[i] < lo:
                start += 1
            j = start
            while j < nr and t_remote[j] - t_local[i] <= hi:
                cnt += 1
                j += 1
    idx_arr = np.empty(cnt, dtype=np.int64)
    diff_arr = np.empty(cnt, dtype=np.float64)
    cdef int64_t[:] idx = idx_arr
    cdef double[:] diff = diff_arr
    start = 0
    cnt = 0
    with nogil:
        for i in range(nl):
            while start < nr and t_remote[start] - t_local[i] < lo:
                start += 1
            j = start
            while j < nr:
                d = t_remote[j] - t_local[i]
                if d > hi:
                    break
                idx[cnt] = i
                diff[cnt] = d
                cnt += 1
                j += 1
    return idx_arr, diff_arr


def hough_peak(const double[:] x, const double[:] diff, const double[:] ds, double o_lo, double w, Py_ssize_t nb):
    cdef Py_ssize_t n = x.shape[0], nh = ds.shape[0]
    counts_arr = np.zeros(nb, dtype=np.int64)
    touched_arr = np.empty(max(n, 1), dtype=np.int64)
    cdef int64_t[:] counts = counts_arr
    cdef int64_t[:] touched = touched_arr
    cdef Py_ssize_t h, i, j, b, k, nt
    cdef int64_t s, ls, best = -1
    cdef Py_ssize_t lj, bh = 0, bj = 0
    cdef double r, d
    with nogil:
        for h in range(nh):
            d = ds[h]
            nt = 0
            for i in range(n):
                r = diff[i] - d * x[i]
                r = (r - o_lo) / w
                if r >= 0.0 and r < nb:
                    b = <Py_ssize_t>r
                    counts[b] += 1
                    touched[nt] = b
                    nt += 1
            # untouched bins are zero, so only neighbours of touched bins can hold the peak
            ls = 0
            lj = 0
            for k in range(nt):
                b = touched[k]
                for j in range(b - 1, b + 1):
                    if j < 0 or j > nb - 2:
                        continue
                    s = counts[j] + counts[j + 1]
                    if s > ls or (s == ls and j < lj):
                        ls = s
                        lj = j
            for k in range(nt):
                counts[touched[k]] = 0
            if ls > best:
                best = ls
                bh = h
                bj = lj
    return int(best), int(bh), int(bj)
