"""Pure-Python kernels. Reference semantics for the compiled ``_ckernels``.

Both implementations consume the same pre-drawn uniforms, so their outputs
are identical element for element.
"""

import numpy as np

N_UNIFORMS = 32

# click-mask bits
BIT_A, BIT_B, BIT_C, BIT_D, BIT_E, BIT_F, BIT_G, BIT_H = (1 << k for k in range(8))

# interference categories
CAT_NONE, CAT_PSI_MINUS, CAT_PSI_PLUS, CAT_BUNCHED, CAT_SPLIT = -1, 0, 1, 2, 3

_U_J1, _U_J2, _U_CAT, _U_DET, _U_JOINT, _U_JOINT_B = 0, 1, 2, 3, 4, 5
_U_EXTRA, _U_ALICE, _U_BOB = 6, 18, 22

# detector bit for (arm, pol): arm 0 -> a/b, arm 1 -> c/d; pol 0 = H
_DET_BITS = ((BIT_A, BIT_B), (BIT_C, BIT_D))


def resolve_pulses(cls, u, m, pj, pa_plus, pb_plus):
    """Turn detected-photon class counts into click masks, one pulse per row.

    cls : int64 (n, 6) -- (s1_both, s1_bsm_only, s1_outer_only,
                            s2_both, s2_bsm_only, s2_outer_only)
    u   : float64 (n, N_UNIFORMS)
    m   : overlap of the interfering photon pair
    pj  : float64 (2, 4) partner joint outcome law (++, +-, -+, --) for the
          psi- and psi+ branches
    pa_plus, pb_plus : float64 (2,) P(+) at Alice / Bob for an H (0) or V (1) photon
    """
    n = cls.shape[0]
    mask = np.zeros(n, dtype=np.uint8)
    cat = np.full(n, CAT_NONE, dtype=np.int8)
    p_bunch = 0.5 + 0.25 * (1.0 + m)
    for i in range(n):
        s1b, s1o, s1a = int(cls[i, 0]), int(cls[i, 1]), int(cls[i, 2])
        s2b, s2o, s2a = int(cls[i, 3]), int(cls[i, 4]), int(cls[i, 5])
        n1 = s1b + s1o
        n2 = s2b + s2o
        row = u[i]
        bits = 0
        # outcome per outer photon: -1 unset, 0 '+', 1 '-'; pol per partner: -1 unknown
        alice_pol = [-1, -1, -1, -1]
        bob_pol = [-1, -1, -1, -1]
        alice_out = [-1, -1, -1, -1]
        bob_out = [-1, -1, -1, -1]
        j1 = j2 = -1
        if n1 > 0 and n2 > 0:
            j1 = int(row[_U_J1] * n1)
            j2 = int(row[_U_J2] * n2)
            uc = row[_U_CAT]
            ud = row[_U_DET]
            has_a = j1 < s1b
            has_b = j2 < s2b
            if uc < 0.5:
                kind = 0 if uc < 0.25 else 1
                cat[i] = kind
                if kind == 0:
                    bits |= (BIT_A | BIT_D) if ud < 0.5 else (BIT_B | BIT_C)
                else:
                    bits |= (BIT_A | BIT_B) if ud < 0.5 else (BIT_C | BIT_D)
                uj = row[_U_JOINT]
                if has_a and has_b:
                    c0 = pj[kind, 0]
                    c1 = c0 + pj[kind, 1]
                    c2 = c1 + pj[kind, 2]
                    if uj < c0:
                        alice_out[j1], bob_out[j2] = 0, 0
                    elif uj < c1:
                        alice_out[j1], bob_out[j2] = 0, 1
                    elif uj < c2:
                        alice_out[j1], bob_out[j2] = 1, 0
                    else:
                        alice_out[j1], bob_out[j2] = 1, 1
                elif has_a:
                    alice_out[j1] = 0 if uj < 0.5 else 1
                elif has_b:
                    bob_out[j2] = 0 if uj < 0.5 else 1
            else:
                if uc < p_bunch:
                    cat[i] = CAT_BUNCHED
                    d = min(int(ud * 4), 3)
                    bits |= (BIT_A, BIT_B, BIT_C, BIT_D)[d]
                    pol = d & 1
                else:
                    cat[i] = CAT_SPLIT
                    pol = 0 if ud < 0.5 else 1
                    bits |= (BIT_A | BIT_C) if pol == 0 else (BIT_B | BIT_D)
                # singlet partners carry the orthogonal polarization
                if has_a:
                    alice_pol[j1] = 1 - pol
                if has_b:
                    bob_pol[j2] = 1 - pol
        r = 0
        for k in range(n1):
            if k == j1:
                continue
            arm = 0 if row[_U_EXTRA + 2 * r] < 0.5 else 1
            pol = 0 if row[_U_EXTRA + 2 * r + 1] < 0.5 else 1
            bits |= _DET_BITS[arm][pol]
            if k < s1b:
                alice_pol[k] = 1 - pol
            r += 1
        for k in range(n2):
            if k == j2:
                continue
            arm = 0 if row[_U_EXTRA + 2 * r] < 0.5 else 1
            pol = 0 if row[_U_EXTRA + 2 * r + 1] < 0.5 else 1
            bits |= _DET_BITS[arm][pol]
            if k < s2b:
                bob_pol[k] = 1 - pol
            r += 1
        for k in range(s1b + s1a):
            out = alice_out[k] if k < 4 else -1
            if out < 0:
                ua = row[_U_ALICE + k]
                pol = alice_pol[k] if k < s1b else -1
                p_plus = 0.5 if pol < 0 else pa_plus[pol]
                out = 0 if ua < p_plus else 1
            bits |= BIT_E if out == 0 else BIT_F
        for k in range(s2b + s2a):
            out = bob_out[k] if k < 4 else -1
            if out < 0:
                ub = row[_U_BOB + k]
                pol = bob_pol[k] if k < s2b else -1
                p_plus = 0.5 if pol < 0 else pb_plus[pol]
                out = 0 if ub < p_plus else 1
            bits |= BIT_G if out == 0 else BIT_H
        mask[i] = bits
    return mask, cat


# valid BSM patterns: channel pair -> kind (0 = psi-, 1 = psi+); channels a..d = 0..3
_BSM_KIND = {(0, 3): 0, (1, 2): 0, (0, 1): 1, (2, 3): 1}


def pair_bsm(tags, chans, window):
    """Earliest-first greedy pairing of BSM clicks into valid patterns.

    Returns (tag, kind, first_index, second_index) arrays.
    """
    n = tags.shape[0]
    used = np.zeros(n, dtype=bool)
    out_t, out_k, out_i, out_j = [], [], [], []
    for i in range(n):
        if used[i] or chans[i] > 3:
            continue
        ti = tags[i]
        ci = int(chans[i])
        j = i + 1
        while j < n and tags[j] - ti <= window:
            if not used[j] and chans[j] <= 3:
                cj = int(chans[j])
                key = (ci, cj) if ci < cj else (cj, ci)
                kind = _BSM_KIND.get(key, -1)
                if kind >= 0:
                    used[i] = used[j] = True
                    out_t.append(ti)
                    out_k.append(kind)
                    out_i.append(i)
                    out_j.append(j)
                    break
            j += 1
    return (
        np.array(out_t, dtype=np.int64),
        np.array(out_k, dtype=np.int8),
        np.array(out_i, dtype=np.int64),
        np.array(out_j, dtype=np.int64),
    )


def match_greedy(ta, tb, lo, hi):
    """Pair each ``ta`` (in order) with the earliest unused ``tb`` with tb - ta in [lo, hi]."""
    na, nb = ta.shape[0], tb.shape[0]
    used = np.zeros(nb, dtype=bool)
    ia, ib = [], []
    start = 0
    for i in range(na):
        lo_t = ta[i] + lo
        hi_t = ta[i] + hi
        while start < nb and tb[start] < lo_t:
            start += 1
        j = start
        while j < nb and tb[j] <= hi_t:
            if not used[j]:
                used[j] = True
                ia.append(i)
                ib.append(j)
                break
            j += 1
    return np.array(ia, dtype=np.int64), np.array(ib, dtype=np.int64)


def pair_diffs(t_local, t_remote, lo, hi):
    """All pairs with t_remote - t_local in [lo, hi]; returns (local index, difference)."""
    nl, nr = t_local.shape[0], t_remote.shape[0]
    idx, diff = [], []
    start = 0
    for i in range(nl):
        tl = t_local[i]
        while start < nr and t_remote[start] - tl < lo:
            start += 1
        j = start
        while j < nr:
            d = t_remote[j] - tl
            if d > hi:
                break
            idx.append(i)
            diff.append(d)
            j += 1
    return np.array(idx, dtype=np.int64), np.array(diff, dtype=np.float64)


HOUGH_CHUNK_CELLS = 4_000_000


def hough_peak(x, diff, ds, o_lo, w, nb):
    """Best 2-bin count of ``diff - d * x`` over drift hypotheses ``ds``.

    Returns (count, hypothesis index, left bin); ties keep the first in (h, j) order.
    """
    best, bh, bj = -1, 0, 0
    chunk = max(1, min(ds.size, HOUGH_CHUNK_CELLS // max(nb, x.size, 1)))
    for s in range(0, ds.size, chunk):
        dd = ds[s:s + chunk]
        r = diff[None, :] - dd[:, None] * x[None, :]
        b = np.floor((r - o_lo) / w).astype(np.int64)
        ok = (b >= 0) & (b < nb)
        flat = (np.arange(dd.size)[:, None] * nb + b)[ok]
        counts = np.bincount(flat, minlength=dd.size * nb).reshape(dd.size, nb)
        pair = counts[:, :-1] + counts[:, 1:]
        h, j = np.unravel_index(int(np.argmax(pair)), pair.shape)
        if pair[h, j] > best:
            best, bh, bj = int(pair[h, j]), s + int(h), int(j)
    return best, bh, bj
