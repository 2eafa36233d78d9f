"""Block-wise event generation with geometric gap sampling over pulse slots.

Only pulses that can leave a trace in a recorder are ever materialized: a
La Palma coincidence candidate (two or more BSM photons plus an Alice
photon) or, in remote mode, any photon reaching Bob. The per-pulse law of
detected-photon classes is exact (binomial thinning of the pair-number
distribution), so conditioning on "interesting" pulses loses nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import ExperimentConfig
from .link import TICK_PS, Channel, apply_clock_ps, dark_events_ps, sample_block_loss, transmission
from .qstate import BellKind, MeasBasis, born_probabilities, single_outcome_prob, swapped_mixture
from .sources import detected_class_table, effective_overlap

BSM_MASK = kernels.BIT_A | kernels.BIT_B | kernels.BIT_C | kernels.BIT_D
ALICE_MASK = kernels.BIT_E | kernels.BIT_F
BOB_MASK = kernels.BIT_G | kernels.BIT_H
GATE_SLACK_PS = 3000
BASE_DELAY_NS = 1000.0

STREAM_PULSES, STREAM_CLASSES, STREAM_RESOLVE, STREAM_TIMES, STREAM_DARK, STREAM_LOSS = range(6)


def block_rng(seed: int, block: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block, stream)))


@dataclass
class PulseLaw:
    """Joint law of detected-photon classes for both sources in one pulse."""

    classes: np.ndarray  # (K, 6)
    probs: np.ndarray  # (K,)

    @classmethod
    def build(cls, source, eta_local: float, eta_bob: float) -> "PulseLaw":
        c1, p1 = detected_class_table(source, eta_local, eta_local)
        c2, p2 = detected_class_table(source, eta_local, eta_bob)
        classes = np.concatenate([np.repeat(c1, len(c2), axis=0), np.tile(c2, (len(c1), 1))], axis=1)
        probs = np.outer(p1, p2).ravel()
        return cls(classes, probs)

    @property
    def n_bsm(self):
        c = self.classes
        return c[:, 0] + c[:, 1] + c[:, 3] + c[:, 4]

    @property
    def n_alice(self):
        return self.classes[:, 0] + self.classes[:, 2]

    @property
    def n_bob(self):
        return self.classes[:, 3] + self.classes[:, 5]

    def interesting(self, remote: bool) -> np.ndarray:
        local = (self.n_bsm >= 2) & (self.n_alice >= 1)
        if remote:
            return local | (self.n_bob >= 1)
        return local


def outcome_tables(m: float, basis_a: MeasBasis, basis_b: MeasBasis):
    pj = np.array([
        born_probabilities(swapped_mixture(m, BellKind.PSI_MINUS), basis_a, basis_b),
        born_probabilities(swapped_mixture(m, BellKind.PSI_PLUS), basis_a, basis_b),
    ])
    h, v = (1.0, 0.0), (0.0, 1.0)
    pa = np.array([single_outcome_prob(h, basis_a), single_outcome_prob(v, basis_a)])
    pb = np.array([single_outcome_prob(h, basis_b), single_outcome_prob(v, basis_b)])
    return pj, pa, pb


def gap_sample(rng: np.random.Generator, n_slots: int, q: float) -> np.ndarray:
    """Indices in [0, n_slots) of a Bernoulli(q) process, drawn by geometric skipping."""
    if q <= 0.0 or n_slots <= 0:
        return np.empty(0, dtype=np.int64)
    if q >= 1.0:
        return np.arange(n_slots, dtype=np.int64)
    chunk = int(n_slots * q + 6.0 * np.sqrt(n_slots * q) + 16)
    out = []
    pos = -1
    while True:
        gaps = rng.geometric(q, size=chunk)
        idx = pos + np.cumsum(gaps, dtype=np.int64)
        if idx[-1] >= n_slots:
            out.append(idx[idx < n_slots])
            break
        out.append(idx)
        pos = int(idx[-1])
    return np.concatenate(out)


@dataclass
class BlockEvents:
    block: int
    loss_db: float
    n_pulses: int
    n_sampled: int
    lapalma_t: np.ndarray  # true times, ps
    lapalma_ch: np.ndarray
    lapalma_truth: np.ndarray  # pulse index, -1 for dark counts
    bob_t: np.ndarray
    bob_ch: np.ndarray
    bob_truth: np.ndarray
    category_counts: dict = field(default_factory=dict)


def _clicks(pulse_idx, masks, bits, delays_ps, jitter_ps, period_ps, rng):
    """Expand click masks into (time_ps, channel, truth) for the given channel bits."""
    ts, chs, tr = [], [], []
    for bit, ch in bits:
        sel = (masks & (1 << ch)) != 0
        n = int(sel.sum())
        if n == 0:
            continue
        t = pulse_idx[sel] * period_ps + delays_ps[ch]
        if jitter_ps[ch] > 0:
            t = t + np.rint(rng.normal(0.0, jitter_ps[ch], n)).astype(np.int64)
        ts.append(t)
        chs.append(np.full(n, ch, dtype=np.uint8))
        tr.append(pulse_idx[sel])
    if not ts:
        return np.empty(0, np.int64), np.empty(0, np.uint8), np.empty(0, np.int64)
    return np.concatenate(ts), np.concatenate(chs), np.concatenate(tr)


def _near(times, anchors, slack):
    if anchors.size == 0 or times.size == 0:
        return np.zeros(times.size, dtype=bool)
    anchors = np.sort(anchors)
    pos = np.searchsorted(anchors, times)
    left = np.abs(times - anchors[np.clip(pos - 1, 0, anchors.size - 1)])
    right = np.abs(anchors[np.clip(pos, 0, anchors.size - 1)] - times)
    return np.minimum(left, right) <= slack


class Simulator:
    """Generates per-block event lists for an :class:`ExperimentConfig`."""

    def __init__(self, cfg: ExperimentConfig, schedule):
        self.cfg = cfg.validate()
        self.schedule = schedule
        self.remote = cfg.mode == "remote"
        self.period_ps = int(round(1e12 / cfg.rep_rate_hz))
        self.pulses_per_block = int(round(cfg.rep_rate_hz * cfg.block_seconds))
        self.source = cfg.source
        self.m_eff = effective_overlap(self.source, cfg.hom)
        delays = np.full(8, BASE_DELAY_NS)
        delays[[Channel.E, Channel.F]] += cfg.alice_delay_ns
        delays[[Channel.G, Channel.H]] += cfg.bob_delay_ns
        self.delays_ps = np.rint(delays * 1e3).astype(np.int64)
        jit = np.full(8, cfg.jitter_local_ps)
        if self.remote:
            jit[[Channel.G, Channel.H]] = cfg.jitter_remote_ps
        self.jitter_ps = jit
        self._law_cache: dict = {}

    def law(self, t_bob: float) -> PulseLaw:
        key = round(t_bob, 15)
        if key not in self._law_cache:
            self._law_cache[key] = PulseLaw.build(self.source, self.cfg.eta_local, self.cfg.eta_local * t_bob)
        return self._law_cache[key]

    def block_loss(self, block: int) -> float:
        if not self.remote:
            return 0.0
        return sample_block_loss(self.cfg.channel, block_rng(self.cfg.seed, block, STREAM_LOSS))

    def simulate_block(self, block: int) -> BlockEvents:
        cfg = self.cfg
        seed = cfg.seed
        loss = self.block_loss(block)
        law = self.law(float(transmission(loss)))
        interesting = law.interesting(self.remote)
        p_int = law.probs * interesting
        q = float(p_int.sum())

        offsets = gap_sample(block_rng(seed, block, STREAM_PULSES), self.pulses_per_block, q)
        n = offsets.size
        pulse_idx = block * self.pulses_per_block + offsets
        rng_c = block_rng(seed, block, STREAM_CLASSES)
        cdf = np.cumsum(p_int / q) if q > 0 else np.ones(1)
        choice = np.minimum(np.searchsorted(cdf, rng_c.random(n), side="right"), len(cdf) - 1)
        cls = law.classes[choice]

        basis_a, basis_b = self.schedule(block)
        pj, pa, pb = outcome_tables(self.m_eff, basis_a, basis_b)
        u = block_rng(seed, block, STREAM_RESOLVE).random((n, kernels.N_UNIFORMS))
        masks, cat = kernels.resolve_pulses(cls, u, self.m_eff, pj, pa, pb)

        bsm_bits = masks & BSM_MASK
        n_bsm_clicks = np.zeros(n, dtype=np.int64)
        for k in range(4):
            n_bsm_clicks += (bsm_bits >> k) & 1
        gated = (n_bsm_clicks >= 2) & ((masks & ALICE_MASK) != 0)
        if not self.remote:
            gated &= (masks & BOB_MASK) != 0

        rng_t = block_rng(seed, block, STREAM_TIMES)
        lp_t, lp_ch, lp_tr = _clicks(
            pulse_idx[gated], masks[gated], [(1 << c, c) for c in range(6)],
            self.delays_ps, self.jitter_ps, self.period_ps, rng_t,
        )
        bob_src = np.ones(n, dtype=bool) if self.remote else gated
        bob_t, bob_ch, bob_tr = _clicks(
            pulse_idx[bob_src], masks[bob_src], [(1 << c, c) for c in (6, 7)],
            self.delays_ps, self.jitter_ps, self.period_ps, rng_t,
        )

        # dark counts: La Palma only where the coincidence logic would pass them
        rng_d = block_rng(seed, block, STREAM_DARK)
        start_ps = block * self.pulses_per_block * self.period_ps
        span_ps = self.pulses_per_block * self.period_ps
        dark_t, dark_ch = [lp_t], [lp_ch]
        dark_tr = [lp_tr]
        for ch in range(6):
            d = dark_events_ps(cfg.dark_rate_local_hz, start_ps, span_ps, rng_d)
            d = d[_near(d, lp_t, GATE_SLACK_PS)]
            dark_t.append(d)
            dark_ch.append(np.full(d.size, ch, np.uint8))
            dark_tr.append(np.full(d.size, -1, np.int64))
        bt, bc, btr = [bob_t], [bob_ch], [bob_tr]
        bob_rate = cfg.dark_rate_remote_hz if self.remote else cfg.dark_rate_local_hz
        for ch in (6, 7):
            d = dark_events_ps(bob_rate, start_ps + self.delays_ps[ch], span_ps, rng_d)
            if not self.remote:
                d = d[_near(d, bob_t, GATE_SLACK_PS)]
            bt.append(d)
            bc.append(np.full(d.size, ch, np.uint8))
            btr.append(np.full(d.size, -1, np.int64))

        counts = {int(c): int(v) for c, v in zip(*np.unique(cat, return_counts=True))}
        return BlockEvents(
            block=block, loss_db=loss, n_pulses=self.pulses_per_block, n_sampled=n,
            lapalma_t=np.concatenate(dark_t), lapalma_ch=np.concatenate(dark_ch),
            lapalma_truth=np.concatenate(dark_tr),
            bob_t=np.concatenate(bt), bob_ch=np.concatenate(bc), bob_truth=np.concatenate(btr),
            category_counts=counts,
        )


def to_tags(t_ps, ch, truth, clock):
    """Apply a recorder clock and sort by (tag, channel)."""
    tags = apply_clock_ps(t_ps, clock)
    order = np.lexsort((ch, tags))
    return tags[order], ch[order], truth[order]


__all__ = ["Simulator", "PulseLaw", "BlockEvents", "gap_sample", "outcome_tables", "to_tags", "TICK_PS"]
