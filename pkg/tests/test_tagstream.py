import math

import numpy as np
import pytest

from swapsim import kernels
from swapsim.qstate import HV
from swapsim.simulate import outcome_tables
from swapsim.tagstream import (
    TICK_NS, Recorder, StreamError, SyncSolution, TagStream, ThreeFolds, drift_correct, find_bsm,
    fourfold, sync_streams, threefold, xcorr_offset,
)

A, B, C, D, E, F, G, H = range(8)


def _ns(t):
    return np.floor(np.asarray(t, float) / TICK_NS).astype(np.int64)


def _lp(times_ns, chans, truth=None):
    order = np.argsort(times_ns, kind="stable")
    tr = None if truth is None else np.asarray(truth)[order]
    return TagStream(Recorder.LAPALMA, _ns(np.asarray(times_ns)[order]), np.asarray(chans)[order], tr)


def test_find_bsm_singlet_pattern():
    rec = find_bsm(_lp([1000.0, 1001.0], [A, D]), window_ns=2.0)
    assert len(rec) == 1 and rec.kinds[0] == 0


def test_find_bsm_psi_plus_pattern():
    rec = find_bsm(_lp([1000.0, 1000.5, 5000.0, 5000.3], [A, B, C, D]), window_ns=2.0)
    assert rec.kinds.tolist() == [1, 1]


def test_find_bsm_invalid_pattern():
    assert len(find_bsm(_lp([1000.0, 1001.0], [A, C]), window_ns=2.0)) == 0
    assert len(find_bsm(_lp([1000.0, 1001.0], [B, D]), window_ns=2.0)) == 0


def test_find_bsm_unsorted():
    s = TagStream(Recorder.LAPALMA, [10, 5], [A, D])
    with pytest.raises(StreamError):
        find_bsm(s)
    with pytest.raises(StreamError):
        s.validate()


def test_stream_rejects_foreign_channel():
    with pytest.raises(StreamError):
        TagStream(Recorder.TENERIFE, [1, 2], [G, A]).validate()


def test_bsm_kinds_quarter_each():
    # ideal pairs, one photon from each source at the beam splitter
    n = 40_000
    pj, pa, pb = outcome_tables(1.0, HV, HV)
    cls = np.tile([1, 0, 0, 1, 0, 0], (n, 1))
    masks, _ = kernels.resolve_pulses(cls, np.random.default_rng(1).random((n, kernels.N_UNIFORMS)), 1.0, pj, pa, pb)
    times, chans = [], []
    for i, mk in enumerate(masks):
        for c in range(4):
            if mk >> c & 1:
                times.append(i * 1000.0 + 0.2 * c)
                chans.append(c)
    rec = find_bsm(_lp(times, chans), window_ns=1.0)
    n_minus = int((rec.kinds == 0).sum())
    n_plus = int((rec.kinds == 1).sum())
    se = math.sqrt(n * 0.25 * 0.75)
    assert abs(n_minus - n / 4) < 4 * se and abs(n_plus - n / 4) < 4 * se
    assert abs(n_minus - n_plus) < 4 * math.sqrt(n_minus + n_plus)


def test_threefold_window():
    s = _lp([1000.0, 1000.5, 1002.0, 9000.0, 9000.5, 9010.0], [A, D, E, B, C, F])
    tf = threefold(find_bsm(s, 1.0), s, window_ns=5.0, delay_ns=0.0)
    assert len(tf) == 1 and tf.alice[0] == 0


def test_xcorr_recovers_shift():
    rng = np.random.default_rng(2)
    local = np.sort(rng.random(3000) * 1e9)
    remote = np.sort(np.concatenate([local[:600] + 1000.0, rng.random(3000) * 1e9]))
    e = xcorr_offset(local, remote, search_span_us=10.0, bin_ns=1.0)
    assert e.synced and abs(e.offset_ns - 1000.0) <= 1.0 and e.snr > 5


def test_xcorr_noise_flagged():
    rng = np.random.default_rng(3)
    local = np.sort(rng.random(3000) * 1e9)
    remote = np.sort(rng.random(3000) * 1e9)
    assert not xcorr_offset(local, remote, search_span_us=10.0, bin_ns=1.0).synced


def _link(seed, n_blocks, block_s, rate_local, frac_true, offset_ns, drift_ppm, noise_hz, jitter_ns=0.3,
          gap_block=None):
    """Local event times plus remote clicks (its own clock), with truth ids."""
    rng = np.random.default_rng(seed)
    T = n_blocks * block_s * 1e9
    n = rng.poisson(rate_local * n_blocks * block_s)
    local = np.sort(rng.random(n) * T)
    true = rng.random(n) < frac_true
    if gap_block is not None:
        g0, g1 = gap_block * block_s * 1e9, (gap_block + 1) * block_s * 1e9
        true &= ~((local >= g0) & (local < g1))
    lt = local[true]
    remote_true = lt * (1 + drift_ppm * 1e-6) + offset_ns + rng.normal(0, jitter_ns, lt.size)
    noise = rng.random(rng.poisson(noise_hz * n_blocks * block_s)) * T
    if gap_block is not None:
        noise = noise[~((noise >= g0) & (noise < g1))]
    remote = np.concatenate([remote_true, noise])
    ids = np.concatenate([np.flatnonzero(true), np.full(noise.size, -1)])
    o = np.argsort(remote)
    return local, remote[o], ids[o]


def test_drift_tracked_block_to_block():
    block_s = 30.0
    local, remote, _ = _link(4, 6, block_s, 150.0, 0.05, 300_000.0, 5.0, 1000.0)
    sol = sync_streams(local, remote, block_s, 6, center_ns=300_000.0, drift_search_ppm=10.0)
    assert sol.synced.all()
    step = np.diff(sol.offsets_ns)
    # 30 s at 5 ppm = 150 us per block
    assert np.all(np.abs(step - 150_000.0) < 15_000.0)
    assert np.all(np.abs(step - 150_000.0) < 5.0)
    assert abs(sol.drift_ppm - 5.0) < 0.5


def test_noise_only_not_synced():
    rng = np.random.default_rng(5)
    local = np.sort(rng.random(9000) * 60e9)
    remote = np.sort(rng.random(60000) * 60e9)
    sol = sync_streams(local, remote, 30.0, 2, center_ns=0.0, drift_search_ppm=10.0)
    assert not sol.synced.any()


def _remote_stream(remote_ns, ids, block_s=30.0):
    tags = _ns(remote_ns)
    chans = np.where(np.arange(tags.size) % 2 == 0, G, H)
    return TagStream(Recorder.TENERIFE, tags, chans, ids, block_s)


def test_constant_offset_correction_is_shift():
    block_s = 10.0
    local, remote, ids = _link(6, 4, block_s, 300.0, 0.1, 250_000.0, 0.0, 200.0, jitter_ns=0.0)
    sol = sync_streams(local, remote, block_s, 4, center_ns=250_000.0, drift_search_ppm=1.0)
    assert sol.synced.all()
    rs = _remote_stream(remote, ids, block_s)
    out, dropped = drift_correct(sol, rs)
    kept = rs.times_ns[rs.times_ns - 250_000.0 >= 0]
    assert dropped == rs.tags.size - out.tags.size
    np.testing.assert_allclose(out.times_ns[-50:], kept[-50:] - 250_000.0, atol=1.0)
    assert np.allclose(np.diff(sol.offsets_ns), 0.0, atol=1.0)


def test_drift_correction_residuals():
    block_s = 30.0
    local, remote, ids = _link(7, 6, block_s, 150.0, 0.05, -120_000.0, 5.0, 1000.0)
    sol = sync_streams(local, remote, block_s, 6, center_ns=-120_000.0, drift_search_ppm=10.0)
    rs = _remote_stream(remote + 200_000.0, ids, block_s)
    sol.offsets_ns += 200_000.0
    out, _ = drift_correct(sol, rs)
    tv = out.truth >= 0
    res = out.times_ns[tv] - local[out.truth[tv]]
    n_true = int((ids >= 0).sum())
    assert (np.abs(res) < 2.5).sum() >= 0.95 * n_true


def test_gap_block_excluded_with_bookkeeping():
    block_s = 20.0
    local, remote, ids = _link(8, 5, block_s, 300.0, 0.05, 100_000.0, 2.0, 300.0, gap_block=2)
    sol = sync_streams(local, remote, block_s, 5, center_ns=100_000.0, drift_search_ppm=5.0)
    assert sol.synced.tolist() == [True, True, False, True, True]
    rs = _remote_stream(remote, ids, block_s)
    out, dropped = drift_correct(sol, rs)
    assert len(out) + dropped == len(rs)
    blk = np.floor(out.times_ns / (block_s * 1e9))
    assert not np.any(blk == 2)


def test_drift_correct_needs_two_blocks():
    sol = SyncSolution(1e9, np.array([0.0, 0.0]), np.zeros(2), np.array([9.0, 0.0]),
                       np.array([True, False]), np.array([5, 0]))
    with pytest.raises(StreamError):
        drift_correct(sol, _remote_stream(np.array([1.0]), np.array([-1])))


def _tf(times_ns, truth=None):
    n = len(times_ns)
    return ThreeFolds(_ns(times_ns), np.zeros(n, np.int8), np.zeros(n, np.int8),
                      np.full(n, -1) if truth is None else np.asarray(truth))


def test_fourfold_single_pair():
    ev = fourfold(_tf([5000.0], [3]), _remote_stream(np.array([5001.0]), np.array([3])), 5.0,
                  lambda b: ("PM", "PM"), 30.0)
    assert len(ev) == 1 and ev.truth_match[0] and ev.basis_a[0] == "PM"
    assert ev.accidentals == 0


def test_fourfold_earliest_first():
    ev = fourfold(_tf([5000.0, 5001.0]), _remote_stream(np.array([5001.5]), np.array([-1])), 5.0,
                  lambda b: ("HV", "HV"), 30.0)
    assert len(ev) == 1 and ev.tags[0] == _ns(5000.0)


def test_accidentals_match_rate_product():
    rng = np.random.default_rng(9)
    T_s, r1, r2, tau = 100.0, 10_000.0, 10_000.0, 5.0
    t3 = np.sort(rng.random(rng.poisson(r1 * T_s)) * T_s * 1e9)
    tb = np.sort(rng.random(rng.poisson(r2 * T_s)) * T_s * 1e9)
    ev = fourfold(_tf(t3), _remote_stream(tb, np.full(tb.size, -1)), tau, lambda b: ("HV", "HV"), 30.0)
    expected = r1 * r2 * tau * 1e-9 * T_s
    sig = math.sqrt(expected)
    assert abs(ev.accidentals - expected) < 3 * sig
    assert abs(len(ev) - expected) < 3 * sig
    assert abs(ev.sideband_counts[0] - ev.sideband_counts[1]) < 3 * math.sqrt(2 * expected)
