"""End-to-end runs: simulate both recorders, extract swap events, compute statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import stats as st
from .config import ExperimentConfig
from .model import FourfoldModel
from .qstate import BellKind, MeasBasis, born_probabilities, werner_state
from .simulate import Simulator, to_tags
from .tagfile import export_tags, import_tags
from .tagstream import (
    Recorder, SwapEvents, SyncSolution, TagStream, drift_correct, find_bsm, fourfold, sync_streams, threefold,
)

REPORT_VERSION = 1
KINDS = ((0, BellKind.PSI_MINUS, "singlet"), (1, BellKind.PSI_PLUS, "triplet"))


def settings_schedule(analysis: str) -> Callable[[int], Tuple[MeasBasis, MeasBasis]]:
    """Round-robin settings per block."""
    if analysis == "witness":
        bases = st.WITNESS_BASES
        return lambda block: (bases[block % 3], bases[block % 3])
    if analysis == "chsh":
        pairs = st.CHSH_PAIRS
        return lambda block: pairs[block % 4]
    raise ValueError(f"unknown analysis {analysis!r}")


def _named(schedule):
    def f(block):
        a, b = schedule(block)
        return a.name, b.name
    return f


@dataclass
class SimulationOutput:
    lapalma: TagStream
    tenerife: TagStream
    n_sampled: int
    block_loss_db: np.ndarray
    category_counts: Dict[int, int]


def simulate(cfg: ExperimentConfig) -> SimulationOutput:
    cfg = cfg.validate()
    sim = Simulator(cfg, settings_schedule(cfg.analysis))
    lt, lc, ltr, rt, rc, rtr = [], [], [], [], [], []
    losses = np.zeros(cfg.n_blocks)
    cats: Dict[int, int] = {}
    n_sampled = 0
    for b in range(cfg.n_blocks):
        ev = sim.simulate_block(b)
        lt.append(ev.lapalma_t); lc.append(ev.lapalma_ch); ltr.append(ev.lapalma_truth)
        rt.append(ev.bob_t); rc.append(ev.bob_ch); rtr.append(ev.bob_truth)
        losses[b] = ev.loss_db
        n_sampled += ev.n_sampled
        for k, v in ev.category_counts.items():
            cats[k] = cats.get(k, 0) + v
    cat = lambda parts, dt: np.concatenate(parts) if parts else np.empty(0, dt)
    a = to_tags(cat(lt, np.int64), cat(lc, np.uint8), cat(ltr, np.int64), cfg.lapalma_clock)
    b = to_tags(cat(rt, np.int64), cat(rc, np.uint8), cat(rtr, np.int64), cfg.tenerife_clock)
    return SimulationOutput(
        TagStream(Recorder.LAPALMA, *a, block_seconds=cfg.block_seconds),
        TagStream(Recorder.TENERIFE, *b, block_seconds=cfg.block_seconds),
        n_sampled, losses, cats,
    )


@dataclass
class AnalysisOutput:
    n_bsm: int
    n_threefold: int
    swaps: SwapEvents
    sync: Optional[SyncSolution]
    n_remote: int
    n_remote_dropped: int
    truth_fourfolds: int
    truth_recovered: int


def analyze_streams(cfg: ExperimentConfig, lapalma: TagStream, tenerife: TagStream) -> AnalysisOutput:
    lapalma.validate()
    tenerife.validate()
    bsm = find_bsm(lapalma, cfg.bsm_window_ns)
    tf = threefold(bsm, lapalma, cfg.threefold_window_ns, cfg.alice_delay_ns)
    schedule = _named(settings_schedule(cfg.analysis))
    sync = None
    dropped = 0
    if cfg.mode == "remote":
        sync = sync_streams(
            tf.times_ns, tenerife.times_ns, cfg.block_seconds, cfg.n_blocks, center_ns=cfg.bob_delay_ns,
            span_us=cfg.xcorr_span_us, bin_ns=cfg.xcorr_bin_ns, drift_search_ppm=cfg.drift_search_ppm,
            threshold=cfg.sync_threshold,
        )
        if int(sync.synced.sum()) >= 2:
            bob, dropped = drift_correct(sync, tenerife)
        else:
            bob, dropped = TagStream(Recorder.TENERIFE, [], [], block_seconds=cfg.block_seconds), len(tenerife)
        delay = 0.0
    else:
        bob, delay = tenerife, cfg.bob_delay_ns
    swaps = fourfold(tf, bob, cfg.fourfold_window_ns, schedule, cfg.block_seconds, delay, cfg.sideband_offset_ns)
    t3 = tf.truth[tf.truth >= 0]
    tb = tenerife.truth[tenerife.truth >= 0]
    truth_total = int(np.intersect1d(t3, tb).size)
    return AnalysisOutput(len(bsm), len(tf), swaps, sync, len(tenerife), dropped, truth_total,
                          int(swaps.truth_match.sum()))


# -- report -------------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    return str(v)


@dataclass
class ResultsReport:
    summary: Dict[str, object]
    counts: List[Tuple]
    blocks: List[Tuple]

    COUNT_COLUMNS = ("kind", "basis_a", "basis_b", "pp", "pm", "mp", "mm")
    BLOCK_COLUMNS = ("block", "synced", "offset_ns", "drift_ppm", "significance", "matched", "swap_events")

    def to_text(self) -> str:
        lines = [f"# swapsim report v{REPORT_VERSION}", "[summary]"]
        lines += [f"{k}\t{_fmt(v)}" for k, v in self.summary.items()]
        lines += ["[counts]", "\t".join(self.COUNT_COLUMNS)]
        lines += ["\t".join(_fmt(x) for x in row) for row in self.counts]
        lines += ["[blocks]", "\t".join(self.BLOCK_COLUMNS)]
        lines += ["\t".join(_fmt(x) for x in row) for row in self.blocks]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    def __getitem__(self, key):
        return self.summary[key]

    @staticmethod
    def parse_summary(text: str) -> Dict[str, str]:
        out, on = {}, False
        for line in text.splitlines():
            if line.startswith("["):
                on = line == "[summary]"
                continue
            if on and "\t" in line:
                k, v = line.split("\t", 1)
                out[k] = v
        return out


def _kind_stats(cfg: ExperimentConfig, counts: st.CorrelationCounts, kind: BellKind, label: str,
                n_acc: float) -> Dict[str, object]:
    nan = float("nan")
    out: Dict[str, object] = {}
    n = counts.total(kind)
    out[f"{label}_events"] = n
    if cfg.analysis == "witness":
        try:
            w = st.witness_from_counts(counts, kind)
            vals = (w.v_hv, w.sigma_hv, w.v_pm, w.sigma_pm, w.v_rl, w.sigma_rl, w.v_mean, w.W, w.sigma, w.significance)
        except st.StatsError:
            vals = (nan,) * 10
        for name, v in zip(("V_HV", "sigma_V_HV", "V_PM", "sigma_V_PM", "V_RL", "sigma_V_RL", "V_mean", "W",
                            "sigma_W", "W_significance"), vals):
            out[f"{label}_{name}"] = v
        try:
            out[f"{label}_sigma_W_bootstrap"] = st.bootstrap_sigma(counts, "W", cfg.bootstrap_resamples, kind, cfg.seed)
        except st.StatsError:
            out[f"{label}_sigma_W_bootstrap"] = nan
        try:
            corr = st.witness_from_counts(st.subtract_accidentals(counts, n_acc), kind)
            out[f"{label}_W_acc_corrected"] = corr.W
        except st.StatsError:
            out[f"{label}_W_acc_corrected"] = nan
    else:
        try:
            r = st.chsh_from_counts(counts, kind)
            vals = (*r.E, r.S, r.sigma)
        except st.StatsError:
            vals = (nan,) * 6
        for name, v in zip(("E_ab", "E_ab2", "E_a2b", "E_a2b2", "S", "sigma_S"), vals):
            out[f"{label}_{name}"] = v
        try:
            out[f"{label}_sigma_S_bootstrap"] = st.bootstrap_sigma(counts, "S", cfg.bootstrap_resamples, kind, cfg.seed)
        except st.StatsError:
            out[f"{label}_sigma_S_bootstrap"] = nan
        try:
            corr = st.chsh_from_counts(st.subtract_accidentals(counts, n_acc), kind)
            out[f"{label}_S_acc_corrected"] = corr.S
        except st.StatsError:
            out[f"{label}_S_acc_corrected"] = nan
    return out


def build_report(cfg: ExperimentConfig, res: AnalysisOutput, sim: Optional[SimulationOutput] = None) -> ResultsReport:
    swaps = res.swaps
    counts = st.CorrelationCounts.from_events(swaps)
    schedule = settings_schedule(cfg.analysis)
    n_settings = 3 if cfg.analysis == "witness" else 4
    model = FourfoldModel(cfg)
    pred4 = float(np.mean([model.fourfold_rate_hz(*schedule(b)) for b in range(n_settings)]))
    s: Dict[str, object] = {
        "mode": cfg.mode,
        "analysis": cfg.analysis,
        "seed": cfg.seed,
        "duration_s": cfg.duration_s,
        "n_blocks": cfg.n_blocks,
        "pair_prob": cfg.pair_prob,
        "m_eff": model.m,
        "rate_two_fold_hz": cfg.two_fold_rate_hz,
        "rate_local_threefold_hz": res.n_threefold / cfg.duration_s,
        "rate_fourfold_hz": len(swaps) / cfg.duration_s,
        "rate_fourfold_predicted_hz": pred4,
        "pulses_sampled": sim.n_sampled if sim else -1,
        "bsm_records": res.n_bsm,
        "threefolds": res.n_threefold,
        "remote_clicks": res.n_remote,
        "remote_clicks_dropped": res.n_remote_dropped,
        "swap_events": len(swaps),
        "accidentals_estimate": swaps.accidentals,
        "truth_fourfolds": res.truth_fourfolds,
        "truth_recovered": res.truth_recovered,
        "truth_efficiency": res.truth_recovered / res.truth_fourfolds if res.truth_fourfolds else float("nan"),
        "truth_purity": float(swaps.truth_match.mean()) if len(swaps) else float("nan"),
    }
    if res.sync is not None:
        g = res.sync.global_fit
        s["blocks_synced"] = int(res.sync.synced.sum())
        s["sync_offset_ns"] = g.offset_ns if g else float("nan")
        s["sync_drift_ppm"] = res.sync.drift_ppm
        s["sync_acquisition_blocks"] = res.sync.acquisition_blocks
    else:
        s["blocks_synced"] = cfg.n_blocks
        s["sync_offset_ns"] = 0.0
        s["sync_drift_ppm"] = 0.0
        s["sync_acquisition_blocks"] = 0
    if cfg.mode == "remote":
        t_alice = cfg.alice_delay_ns
        t_bob = cfg.bob_delay_ns
        s["spacelike"] = st.spacelike_check(cfg.length_km, t_alice, t_bob)
    else:
        s["spacelike"] = False
    for code, kind, label in KINDS:
        s.update(_kind_stats(cfg, counts, kind, label, swaps.accidentals))

    rows = []
    for kind, a, b in counts.keys():
        c = counts.cells[(kind, a, b)]
        rows.append(("singlet" if kind == BellKind.PSI_MINUS else "triplet", a, b, *[int(x) for x in c]))
    per_block = np.bincount(swaps.block[swaps.block >= 0], minlength=cfg.n_blocks) if len(swaps) else \
        np.zeros(cfg.n_blocks, np.int64)
    blocks = []
    for k in range(cfg.n_blocks):
        if res.sync is not None:
            blocks.append((k, bool(res.sync.synced[k]), float(res.sync.offsets_ns[k]),
                           float(res.sync.drift[k] * 1e6), float(res.sync.significance[k]),
                           int(res.sync.n_matched[k]), int(per_block[k])))
        else:
            blocks.append((k, True, 0.0, 0.0, float("nan"), 0, int(per_block[k])))
    return ResultsReport(s, rows, blocks)


def run(cfg: ExperimentConfig, export_dir=None) -> ResultsReport:
    """Simulate and analyze one scenario; optionally write both tag files to ``export_dir``."""
    cfg = cfg.validate()
    sim = simulate(cfg)
    if export_dir is not None:
        d = Path(export_dir)
        d.mkdir(parents=True, exist_ok=True)
        export_tags(sim.lapalma, d / "lapalma.swtg")
        export_tags(sim.tenerife, d / "tenerife.swtg")
    res = analyze_streams(cfg, sim.lapalma, sim.tenerife)
    return build_report(cfg, res, sim)


def analyze(cfg: ExperimentConfig, lapalma_path, tenerife_path) -> ResultsReport:
    cfg = cfg.validate()
    lp = import_tags(lapalma_path, Recorder.LAPALMA, cfg.block_seconds)
    te = import_tags(tenerife_path, Recorder.TENERIFE, cfg.block_seconds)
    return build_report(cfg, analyze_streams(cfg, lp, te))


# -- sweeps ---------------------------------------------------------------------------------

ISO_WITNESS = 1.0 / 3.0
ISO_CHSH = 1.0 / math.sqrt(2.0)


def classify(v: float) -> str:
    if v > ISO_CHSH:
        return "bell_violation"
    if v > ISO_WITNESS:
        return "entangled"
    return "not_certified"


def werner_statistics(v: float) -> Tuple[float, float]:
    """Witness and CHSH values of a visibility-``v`` Werner singlet."""
    rho = werner_state(v, BellKind.PSI_MINUS)
    vs = []
    for b in st.WITNESS_BASES:
        p = born_probabilities(rho, b, b)
        vs.append(float(p[1] + p[2] - p[0] - p[3]))
    w = st.witness(*vs).W
    cells = {(a.name, b.name): born_probabilities(rho, a, b) for a, b in st.CHSH_PAIRS}
    return w, st.chsh(cells).S


@dataclass
class SweepPoint:
    delta_l_mm: float
    two_fold_rate_hz: float
    visibility: float
    witness: float
    chsh: float
    label: str


@dataclass
class SweepResult:
    points: List[SweepPoint] = field(default_factory=list)

    COLUMNS = ("delta_l_mm", "two_fold_rate_hz", "visibility", "witness", "chsh", "class")

    def grid(self, delta_ls, rates) -> np.ndarray:
        lookup = {(p.delta_l_mm, p.two_fold_rate_hz): p.visibility for p in self.points}
        return np.array([[lookup[(d, r)] for d in delta_ls] for r in rates])

    def to_text(self) -> str:
        lines = ["\t".join(self.COLUMNS)]
        for p in self.points:
            lines.append("\t".join(_fmt(x) for x in (p.delta_l_mm, p.two_fold_rate_hz, p.visibility, p.witness,
                                                      p.chsh, p.label)))
        return "\n".join(lines) + "\n"


def sweep(cfg: ExperimentConfig, delta_ls: Sequence[float], rates: Sequence[float],
          kind: BellKind = BellKind.PSI_MINUS) -> SweepResult:
    """Expected mean visibility over a (path-length mismatch x 2-fold rate) grid."""
    if len(delta_ls) == 0 or len(rates) == 0:
        raise ValueError("sweep grid must be non-empty")
    out = SweepResult()
    for r in rates:
        for d in delta_ls:
            c = cfg.replace(delta_l_mm=float(d), two_fold_rate_hz=float(r)).validate()
            v = FourfoldModel(c).mean_visibility(kind)
            w, s = werner_statistics(min(max(v, 0.0), 1.0))
            out.points.append(SweepPoint(float(d), float(r), v, w, s, classify(v)))
    return out


__all__ = [
    "settings_schedule", "simulate", "analyze_streams", "build_report", "run", "analyze", "sweep", "classify",
    "werner_statistics", "ResultsReport", "SweepResult", "SweepPoint", "SimulationOutput", "AnalysisOutput",
]
