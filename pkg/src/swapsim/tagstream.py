"""Tag-stream processing: BSM patterns, local 3-folds, clock synchronization, 4-folds."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats as sps

from . import kernels
from .link import ALICE_CHANNELS, BOB_CHANNELS, BSM_CHANNELS, TICK_PS, Channel

TICK_NS = TICK_PS / 1000.0


class StreamError(ValueError):
    pass


class Recorder(str, enum.Enum):
    LAPALMA = "LaPalma"
    TENERIFE = "Tenerife"


RECORDER_CHANNELS = {
    Recorder.LAPALMA: frozenset(int(c) for c in BSM_CHANNELS + ALICE_CHANNELS),
    Recorder.TENERIFE: frozenset(int(c) for c in BOB_CHANNELS),
}


@dataclass
class TagStream:
    recorder: Recorder
    tags: np.ndarray
    channels: np.ndarray
    truth: Optional[np.ndarray] = None  # pulse index per event, -1 = none
    block_seconds: float = 30.0

    def __post_init__(self):
        self.recorder = Recorder(self.recorder)
        self.tags = np.asarray(self.tags, dtype=np.int64)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if self.truth is None:
            self.truth = np.full(self.tags.size, -1, dtype=np.int64)
        self.truth = np.asarray(self.truth, dtype=np.int64)
        if not (self.tags.size == self.channels.size == self.truth.size):
            raise StreamError("tags, channels and truth must have equal length")

    def __len__(self):
        return int(self.tags.size)

    def validate(self) -> "TagStream":
        if self.tags.size and np.any(np.diff(self.tags) < 0):
            raise StreamError("tag stream is not sorted by tag")
        if self.tags.size and self.tags[0] < 0:
            raise StreamError("negative tag")
        bad = set(np.unique(self.channels).tolist()) - RECORDER_CHANNELS[self.recorder]
        if bad:
            raise StreamError(f"channels {sorted(bad)} do not belong to recorder {self.recorder.value}")
        return self

    @property
    def times_ns(self) -> np.ndarray:
        return self.tags * TICK_NS

    def select(self, channels) -> "TagStream":
        keep = np.isin(self.channels, [int(c) for c in channels])
        return TagStream(self.recorder, self.tags[keep], self.channels[keep], self.truth[keep], self.block_seconds)


def _ticks(ns: float) -> int:
    return int(math.floor(ns / TICK_NS + 1e-9))


# -- BSM and local coincidences ---------------------------------------------------------


@dataclass
class BsmRecords:
    tags: np.ndarray
    kinds: np.ndarray  # 0 = psi- (a&d | b&c), 1 = psi+ (a&b | c&d)
    channels: np.ndarray  # (n, 2)
    truth: np.ndarray

    def __len__(self):
        return int(self.tags.size)


def find_bsm(stream: TagStream, window_ns: float = 1.0) -> BsmRecords:
    """Pair BSM clicks separated by at most ``window_ns`` into valid patterns."""
    if stream.tags.size and np.any(np.diff(stream.tags) < 0):
        raise StreamError("find_bsm needs a tag-sorted stream")
    sel = stream.channels <= int(Channel.D)
    tags, chans, truth = stream.tags[sel], stream.channels[sel], stream.truth[sel]
    t, k, i, j = kernels.pair_bsm(tags, chans, _ticks(window_ns))
    same = (truth[i] == truth[j]) & (truth[i] >= 0)
    return BsmRecords(
        tags=t, kinds=k,
        channels=np.stack([chans[i], chans[j]], axis=1) if t.size else np.empty((0, 2), np.uint8),
        truth=np.where(same, truth[i], -1),
    )


@dataclass
class ThreeFolds:
    tags: np.ndarray  # BSM tag
    kinds: np.ndarray
    alice: np.ndarray  # 0 = '+' (e), 1 = '-' (f)
    truth: np.ndarray

    def __len__(self):
        return int(self.tags.size)

    @property
    def times_ns(self):
        return self.tags * TICK_NS


def threefold(bsm: BsmRecords, stream: TagStream, window_ns: float = 5.0, delay_ns: float = 0.0) -> ThreeFolds:
    """Pair each BSM record with at most one Alice click at ``delay_ns`` +- window/2."""
    alice = stream.select(ALICE_CHANNELS)
    ia, ib = kernels.match_greedy(
        bsm.tags * TICK_NS, alice.tags * TICK_NS, delay_ns - window_ns / 2, delay_ns + window_ns / 2
    )
    a_truth = alice.truth[ib]
    return ThreeFolds(
        tags=bsm.tags[ia],
        kinds=bsm.kinds[ia],
        alice=(alice.channels[ib] - int(Channel.E)).astype(np.int8),
        truth=np.where(bsm.truth[ia] == a_truth, a_truth, -1),
    )


# -- synchronization -------------------------------------------------------------------------


def poisson_significance(k: int, lam: float, trials: float = 1.0) -> float:
    """Gaussian-equivalent significance of >= k counts over background ``lam``, look-elsewhere corrected."""
    if k <= 0:
        return 0.0
    if lam <= 0:
        return 40.0
    logp = sps.poisson.logsf(k - 1, lam) + math.log(max(trials, 1.0))
    if logp >= math.log(0.5):
        return 0.0
    return float(-sps.norm.ppf(math.exp(logp))) if logp > -700 else 37.0


@dataclass
class SyncEntry:
    offset_ns: float
    significance: float
    snr: float
    peak_count: int
    background: float
    synced: bool


def xcorr_offset(local_ns, remote_ns, search_span_us: float = 500.0, bin_ns: float = 1.0,
                 threshold: float = 5.0, center_ns: float = 0.0) -> SyncEntry:
    """Histogram of remote - local differences within ``center_ns`` +- span; returns the peak.

    ``snr`` is (peak - mean) / std of the off-peak bins; the acceptance decision
    uses the look-elsewhere corrected Poisson significance.
    """
    span = search_span_us * 1e3
    lo, hi = center_ns - span, center_ns + span
    _, diff = kernels.pair_diffs(np.asarray(local_ns, float), np.asarray(remote_ns, float), lo, hi)
    nb = int(math.ceil((hi - lo) / bin_ns))
    if diff.size == 0:
        return SyncEntry(float("nan"), 0.0, 0.0, 0, 0.0, False)
    idx = np.minimum(((diff - lo) / bin_ns).astype(np.int64), nb - 1)
    counts = np.bincount(idx, minlength=nb)
    j = int(np.argmax(counts))
    near = np.abs(idx - j) <= 1
    offset = float(np.median(diff[near]))
    off = np.ones(nb, dtype=bool)
    off[max(0, j - 2): j + 3] = False
    mean = float(counts[off].mean())
    std = float(counts[off].std())
    snr = (counts[j] - mean) / std if std > 0 else float("inf")
    sig = poisson_significance(int(counts[j]), mean, nb)
    return SyncEntry(offset, sig, float(snr), int(counts[j]), mean, sig >= threshold)


@dataclass
class LineFit:
    offset_ns: float  # remote - local difference at t_ref
    drift: float  # fractional rate (ppm * 1e-6)
    t_ref_ns: float
    significance: float
    n_pairs: int
    residual_std_ns: float = float("nan")

    def predict(self, t_local_ns):
        return self.offset_ns + self.drift * (np.asarray(t_local_ns, float) - self.t_ref_ns)


HOUGH_MAX_HYPS = 4096


def _hough_best(x, diff, d_lo, d_hi, n_hyp, o_lo, o_hi, w):
    """Best (count, drift, offset) over a drift grid, counting 2-bin offset windows."""
    nb = max(2, int(math.ceil((o_hi - o_lo) / w)))
    ds = d_lo + (np.arange(n_hyp) + 0.5) * (d_hi - d_lo) / n_hyp
    count, h, j = kernels.hough_peak(x, diff, ds, o_lo, w, nb)
    return count, float(ds[h]), o_lo + (j + 1) * w


def fit_line(x, diff, d_center, d_half, o_lo, o_hi, bin_ns, w_target=None):
    """Coarse-to-fine search for the line diff = o + d * x, then least-squares refinement.

    Returns (offset, drift, count within +-bin of the final line, residual std).
    """
    if diff.size == 0:
        return 0.0, d_center, 0, float("nan")
    w_target = w_target or 4.0 * bin_ns
    half = float(np.max(np.abs(x))) if x.size else 0.0
    d_lo, d_hi = d_center - d_half, d_center + d_half
    xs, ds = x, diff
    while True:
        spread = (d_hi - d_lo) * half
        n_hyp = int(min(HOUGH_MAX_HYPS, max(1, math.ceil(spread / w_target))))
        w = max(bin_ns, spread / n_hyp)
        _, d_best, o_best = _hough_best(xs, ds, d_lo, d_hi, n_hyp, o_lo, o_hi, w)
        if w <= bin_ns:
            break
        w_target = bin_ns
        step = (d_hi - d_lo) / n_hyp
        keep = np.abs(ds - d_best * xs - o_best) <= 2 * w
        xs, ds = xs[keep], ds[keep]
        d_lo, d_hi = d_best - step, d_best + step
        o_lo, o_hi = o_best - 2 * w, o_best + 2 * w
    # least-squares polish on pairs near the line
    o, d = o_best, d_best
    tol = 1.5 * bin_ns
    std = float("nan")
    for _ in range(3):
        res = diff - (o + d * x)
        sel = np.abs(res) <= tol
        if sel.sum() < 2:
            break
        if sel.sum() >= 3 and np.ptp(x[sel]) > 0:
            d_new, o_new = np.polyfit(x[sel], diff[sel], 1)
            if abs(d_new - d_best) <= max(d_half, 1e-12) + 1e-9:
                o, d = float(o_new), float(d_new)
        else:
            o = float(np.mean(diff[sel] - d * x[sel]))
        std = float(np.std(diff[sel] - (o + d * x[sel])))
        tol = max(bin_ns, 4.0 * std)
    count = int(np.sum(np.abs(diff - (o + d * x)) <= bin_ns))
    return o, d, count, std


def acquire(local_ns, remote_ns, t_ref_ns, half_ns, center_ns=0.0, span_ns=500e3,
            drift_range=1e-7, bin_ns=1.0, extra_trials=1.0) -> LineFit:
    """Joint offset/drift search over one time segment of the streams."""
    local_ns = np.asarray(local_ns, float)
    remote_ns = np.asarray(remote_ns, float)
    o_half = span_ns + drift_range * abs(t_ref_ns)
    win = o_half + drift_range * half_ns + 10 * bin_ns
    idx, diff = kernels.pair_diffs(local_ns, remote_ns, center_ns - win, center_ns + win)
    if diff.size == 0:
        return LineFit(float("nan"), 0.0, t_ref_ns, 0.0, 0)
    x = local_ns[idx] - t_ref_ns
    o, d, count, std = fit_line(x, diff, 0.0, drift_range, center_ns - o_half, center_ns + o_half, bin_ns)
    lam = diff.size * (2 * bin_ns) / (2 * win)
    drift_cells = max(1.0, 2 * drift_range * half_ns / bin_ns)
    trials = (2 * o_half / bin_ns) * drift_cells * extra_trials
    sig = poisson_significance(count, lam, trials)
    return LineFit(o, d, t_ref_ns, sig, count, std)


@dataclass
class SyncSolution:
    block_ns: float
    offsets_ns: np.ndarray  # remote - local difference at each block centre
    drift: np.ndarray  # fractional drift estimate per block
    significance: np.ndarray
    synced: np.ndarray
    n_matched: np.ndarray
    global_fit: Optional[LineFit] = None
    acquisition_blocks: int = 0

    @property
    def n_blocks(self) -> int:
        return int(self.offsets_ns.size)

    @property
    def drift_ppm(self) -> float:
        if self.global_fit is None:
            return float("nan")
        return self.global_fit.drift * 1e6

    def centers_ns(self) -> np.ndarray:
        return (np.arange(self.n_blocks) + 0.5) * self.block_ns


def sync_streams(local_ns, remote_ns, block_seconds: float, n_blocks: int, *, center_ns: float = 0.0,
                 span_us: float = 500.0, bin_ns: float = 1.0, drift_search_ppm: float = 0.1,
                 threshold: float = 5.0, min_pairs: int = 5, max_pool: int = 16) -> SyncSolution:
    """Synchronize the remote recorder to the local one, block by block.

    An acquisition segment grows (1, 2, 4, ... blocks) until a line
    ``remote - local = offset + drift * t`` is found at ``threshold`` sigma.
    The line is then refined over the whole run and each block gets a local
    fit pooled over neighbouring blocks until ``min_pairs`` coincidences are
    available.
    """
    local_ns = np.asarray(local_ns, float)
    remote_ns = np.asarray(remote_ns, float)
    block_ns = block_seconds * 1e9
    nan = np.full(n_blocks, np.nan)
    empty = SyncSolution(block_ns, nan.copy(), nan.copy(), np.zeros(n_blocks), np.zeros(n_blocks, bool),
                         np.zeros(n_blocks, np.int64))
    if n_blocks == 0 or local_ns.size == 0 or remote_ns.size == 0:
        return empty
    drift_range = drift_search_ppm * 1e-6
    span_ns = span_us * 1e3
    n_steps = int(math.ceil(math.log2(n_blocks))) + 1

    fit = None
    g = 1
    while True:
        g = min(g, n_blocks)
        t1 = g * block_ns
        sel_l = local_ns < t1
        sel_r = remote_ns < t1 + span_ns + abs(center_ns) + drift_range * t1 + 1e4
        cand = acquire(local_ns[sel_l], remote_ns[sel_r], t1 / 2, t1 / 2, center_ns, span_ns, drift_range,
                       bin_ns, extra_trials=n_steps)
        if cand.significance >= threshold:
            fit = cand
            break
        if g == n_blocks:
            break
        g *= 2
    if fit is None:
        return empty

    # refine over the full run with a narrow track around the acquired line
    track = 50 * bin_ns + 20 * (fit.residual_std_ns if math.isfinite(fit.residual_std_ns) else bin_ns)
    drift_unc = max(4 * bin_ns / max(fit.t_ref_ns, bin_ns), 1e-12)
    bounds = np.searchsorted(local_ns, np.arange(n_blocks + 1) * block_ns)
    bounds[-1] = local_ns.size
    parts_i, parts_d = [], []
    lag_width = 0.0
    for k in range(n_blocks):
        lo_i, hi_i = bounds[k], bounds[k + 1]
        if hi_i <= lo_i:
            continue
        c = (k + 0.5) * block_ns
        hw = track + drift_unc * (abs(c - fit.t_ref_ns) + block_ns) + abs(fit.drift) * block_ns / 2
        pc = float(fit.predict(c))
        i, dd = kernels.pair_diffs(local_ns[lo_i:hi_i], remote_ns, pc - hw, pc + hw)
        parts_i.append(i + lo_i)
        parts_d.append(dd)
        lag_width += 2 * hw
    idx = np.concatenate(parts_i) if parts_i else np.empty(0, np.int64)
    diff = np.concatenate(parts_d) if parts_d else np.empty(0)
    x = local_ns[idx] - fit.t_ref_ns
    keep = np.abs(diff - (fit.offset_ns + fit.drift * x)) <= track + drift_unc * np.abs(x)
    x, diff, idx = x[keep], diff[keep], idx[keep]
    o, d, count, std = fit_line(x, diff, fit.drift, drift_unc, fit.offset_ns - track, fit.offset_ns + track, bin_ns)
    glob = LineFit(o, d, fit.t_ref_ns, fit.significance, count, std)

    res = diff - glob.predict(local_ns[idx])
    tol = max(1.5 * bin_ns, 4 * (std if math.isfinite(std) else bin_ns))
    match = np.abs(res) <= tol
    mt = local_ns[idx][match]
    md = diff[match]
    blk = np.clip((mt // block_ns).astype(np.int64), 0, n_blocks - 1)
    per_block = np.bincount(blk, minlength=n_blocks)
    # background density of unrelated pairs per ns of lag, per block
    n_bg = max(int((~match).sum()), 1)
    bg_per_ns_block = n_bg / max(lag_width, 1.0)

    r_blk = np.clip((remote_ns // block_ns).astype(np.int64), 0, n_blocks - 1)
    has_remote = np.bincount(r_blk, minlength=n_blocks) > 0
    offsets, drifts, sigs = nan.copy(), nan.copy(), np.zeros(n_blocks)
    synced = np.zeros(n_blocks, bool)
    starts = np.searchsorted(blk, np.arange(n_blocks + 1))
    centers = (np.arange(n_blocks) + 0.5) * block_ns
    for k in range(n_blocks):
        h = 0
        while True:
            lo_b, hi_b = max(0, k - h), min(n_blocks, k + h + 1)
            n = starts[hi_b] - starts[lo_b]
            if n >= min_pairs or h >= max_pool or (lo_b == 0 and hi_b == n_blocks):
                break
            h += 1
        xs = mt[starts[lo_b]:starts[hi_b]]
        ys = md[starts[lo_b]:starts[hi_b]]
        lam = bg_per_ns_block * 2 * tol * (hi_b - lo_b)
        sigs[k] = poisson_significance(int(xs.size), lam, 1.0)
        if xs.size >= 3 and np.ptp(xs) > 0.05 * block_ns:
            slope, icpt = np.polyfit(xs - centers[k], ys, 1)
            if abs(slope - glob.drift) > 10 * drift_unc + 1e-9:
                slope = glob.drift
                icpt = float(np.mean(ys - slope * (xs - centers[k])))
        elif xs.size:
            slope = glob.drift
            icpt = float(np.mean(ys - slope * (xs - centers[k])))
        else:
            slope, icpt = glob.drift, float(glob.predict(centers[k]))
        offsets[k], drifts[k] = icpt, slope
        synced[k] = bool(has_remote[k] and sigs[k] >= threshold)
    return SyncSolution(block_ns, offsets, drifts, sigs, synced, per_block, glob, g)


def drift_correct(solution: SyncSolution, remote: TagStream):
    """Retime the remote stream onto the local clock.

    The remote - local offset is interpolated piecewise-linearly between
    synchronized block centres (each block's own slope at the run edges).
    Events in unsynchronized blocks are dropped. Returns
    ``(corrected_stream, n_dropped)``.
    """
    ok = np.flatnonzero(solution.synced)
    if ok.size < 2:
        raise StreamError("drift_correct needs at least two synchronized blocks")
    t = remote.times_ns
    centers = solution.centers_ns()
    kc, ko = centers[ok], solution.offsets_ns[ok]
    # two passes: locate the event on the local time axis, then evaluate the offset there
    local_guess = t - np.interp(t, kc + ko, ko)
    off = np.interp(local_guess, kc, ko)
    first, last = ok[0], ok[-1]
    before = local_guess < kc[0]
    after = local_guess > kc[-1]
    off[before] = ko[0] + solution.drift[first] * (local_guess[before] - kc[0])
    off[after] = ko[-1] + solution.drift[last] * (local_guess[after] - kc[-1])
    corrected = t - off
    blk = np.floor(corrected / solution.block_ns).astype(np.int64)
    keep = (blk >= 0) & (blk < solution.n_blocks)
    keep[keep] &= solution.synced[blk[keep]]
    keep &= corrected >= 0
    tags = np.rint(corrected[keep] / TICK_NS).astype(np.int64)
    order = np.argsort(tags, kind="stable")
    out = TagStream(Recorder.TENERIFE, tags[order], remote.channels[keep][order], remote.truth[keep][order],
                    remote.block_seconds)
    return out, int((~keep).sum())


# -- 4-folds ---------------------------------------------------------------------------------


@dataclass
class SwapEvents:
    tags: np.ndarray  # local BSM tag
    kinds: np.ndarray
    alice: np.ndarray
    bob: np.ndarray
    basis_a: np.ndarray  # schedule labels
    basis_b: np.ndarray
    block: np.ndarray
    residual_ns: np.ndarray
    truth_match: np.ndarray  # True when BSM, Alice and Bob clicks share a pulse
    accidentals: float = 0.0
    sideband_counts: tuple = (0, 0)

    def __len__(self):
        return int(self.tags.size)

    def subset(self, mask) -> "SwapEvents":
        return SwapEvents(self.tags[mask], self.kinds[mask], self.alice[mask], self.bob[mask],
                          self.basis_a[mask], self.basis_b[mask], self.block[mask], self.residual_ns[mask],
                          self.truth_match[mask], self.accidentals, self.sideband_counts)


def fourfold(tf: ThreeFolds, bob: TagStream, window_ns: float, schedule: Callable[[int], tuple],
             block_seconds: float, delay_ns: float = 0.0, sideband_ns: float = 100.0) -> SwapEvents:
    """Match local 3-folds with Bob clicks at ``delay_ns`` +- window/2, earliest first.

    ``schedule(block) -> (basis_a, basis_b)`` labels the active settings. The
    accidental rate is estimated from two windows displaced by +-``sideband_ns``.
    """
    t3 = tf.times_ns
    tb = bob.times_ns
    half = window_ns / 2
    ia, ib = kernels.match_greedy(t3, tb, delay_ns - half, delay_ns + half)
    side = []
    for s in (-sideband_ns, sideband_ns):
        a2, _ = kernels.match_greedy(t3, tb, delay_ns + s - half, delay_ns + s + half)
        side.append(int(a2.size))
    block = np.floor(t3[ia] / (block_seconds * 1e9)).astype(np.int64)
    labels = [schedule(int(b)) for b in block]
    ba = np.array([str(x[0]) for x in labels], dtype=object)
    bb = np.array([str(x[1]) for x in labels], dtype=object)
    truth = (tf.truth[ia] >= 0) & (tf.truth[ia] == bob.truth[ib])
    return SwapEvents(
        tags=tf.tags[ia], kinds=tf.kinds[ia], alice=tf.alice[ia],
        bob=(bob.channels[ib] - int(Channel.G)).astype(np.int8),
        basis_a=ba, basis_b=bb, block=block,
        residual_ns=tb[ib] - t3[ia] - delay_ns, truth_match=truth,
        accidentals=float(np.mean(side)), sideband_counts=tuple(side),
    )


__all__ = [
    "Recorder", "TagStream", "BsmRecords", "ThreeFolds", "SwapEvents", "SyncEntry", "SyncSolution", "LineFit",
    "find_bsm", "threefold", "xcorr_offset", "acquire", "sync_streams", "drift_correct", "fourfold",
    "poisson_significance", "StreamError",
]
