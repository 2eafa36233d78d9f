"""Visibilities, the entanglement witness, CHSH values and their uncertainties."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Mapping, Tuple, Union

import numpy as np

from .link import C_VACUUM
from .qstate import HV, PM, RL, BellKind, MeasBasis, correlation_sign

# outcome cells are ordered (++, +-, -+, --)
Key = Tuple[BellKind, str, str]


class StatsError(ValueError):
    pass


A0 = MeasBasis.linear(0.0, "a0")
A1 = MeasBasis.linear(math.pi / 4, "a1")
B0 = MeasBasis.linear(math.pi / 8, "b0")
B1 = MeasBasis.linear(3 * math.pi / 8, "b1")
CHSH_PAIRS = ((A0, B0), (A0, B1), (A1, B0), (A1, B1))
# term signs for E(a,b), E(a,b'), E(a',b), E(a',b'); the triplet moves the minus sign
CHSH_SIGNS = {
    BellKind.PSI_MINUS: (1, -1, 1, 1),
    BellKind.PSI_PLUS: (-1, 1, 1, 1),
}
WITNESS_BASES = (HV, PM, RL)
NAMED_BASES = {b.name: b for b in WITNESS_BASES + (A0, A1, B0, B1)}


@dataclass
class CorrelationCounts:
    """Coincidence tallies keyed by (BSM kind, basis A, basis B)."""

    cells: Dict[Key, np.ndarray] = field(default_factory=dict)

    def add(self, kind: BellKind, basis_a: str, basis_b: str, cell: int, n: int = 1) -> None:
        if n < 0:
            raise StatsError("counts must be non-negative")
        key = (BellKind(kind), str(basis_a), str(basis_b))
        arr = self.cells.setdefault(key, np.zeros(4, dtype=np.int64))
        arr[cell] += n

    def get(self, kind: BellKind, basis_a: str, basis_b: str) -> np.ndarray:
        return self.cells.get((BellKind(kind), str(basis_a), str(basis_b)), np.zeros(4, dtype=np.int64))

    def total(self, kind: BellKind | None = None) -> int:
        return int(sum(v.sum() for k, v in self.cells.items() if kind is None or k[0] == kind))

    def keys(self):
        order = list(BellKind)
        return sorted(self.cells, key=lambda k: (order.index(k[0]), k[1], k[2]))

    def copy(self) -> "CorrelationCounts":
        return CorrelationCounts({k: v.copy() for k, v in self.cells.items()})

    @classmethod
    def from_events(cls, events) -> "CorrelationCounts":
        """Tally swap events (``kinds`` 0 = singlet, 1 = triplet; outcomes 0 = '+')."""
        out = cls()
        kinds = np.asarray(events.kinds)
        cell = 2 * np.asarray(events.alice, dtype=np.int64) + np.asarray(events.bob, dtype=np.int64)
        ba = np.asarray(events.basis_a).astype(str)
        bb = np.asarray(events.basis_b).astype(str)
        for kcode, kind in ((0, BellKind.PSI_MINUS), (1, BellKind.PSI_PLUS)):
            sel = kinds == kcode
            if not sel.any():
                continue
            combo = np.char.add(np.char.add(ba[sel], "|"), bb[sel])
            for name in np.unique(combo):
                a, b = name.split("|")
                m = combo == name
                out.cells[(kind, a, b)] = np.bincount(cell[sel][m], minlength=4).astype(np.int64)
        return out


def visibility(cc_max: float, cc_min: float) -> Tuple[float, float]:
    """Contrast and its Poisson uncertainty."""
    if cc_max < 0 or cc_min < 0:
        raise StatsError("counts must be non-negative")
    n = cc_max + cc_min
    if n <= 0:
        raise StatsError("visibility undefined for zero total counts")
    v = float((cc_max - cc_min) / n)
    sigma = 2.0 * math.sqrt(cc_max * cc_min / n**3)
    return v, sigma


def basis_visibility(cells: np.ndarray, kind: BellKind, basis: MeasBasis) -> Tuple[float, float]:
    """Visibility of one equal-basis tally, oriented by the ideal correlation sign of ``kind``."""
    c = np.asarray(cells, dtype=float)
    same, diff = c[0] + c[3], c[1] + c[2]
    if correlation_sign(kind, basis) > 0:
        return visibility(same, diff)
    return visibility(diff, same)


@dataclass(frozen=True)
class WitnessResult:
    W: float
    sigma: float
    significance: float
    v_hv: float
    v_pm: float
    v_rl: float
    sigma_hv: float
    sigma_pm: float
    sigma_rl: float

    @property
    def v_mean(self) -> float:
        return (self.v_hv + self.v_pm + self.v_rl) / 3.0


def witness(v_hv, v_pm, v_rl, sigmas=(0.0, 0.0, 0.0)) -> WitnessResult:
    for v in (v_hv, v_pm, v_rl):
        if not -1.0 <= v <= 1.0:
            raise StatsError(f"visibility {v} outside [-1, 1]")
    v_hv, v_pm, v_rl = float(v_hv), float(v_pm), float(v_rl)
    w = 0.5 - 0.25 * (1.0 + v_hv + v_pm + v_rl)
    s_hv, s_pm, s_rl = (float(s) for s in sigmas)
    sig = 0.25 * math.sqrt(s_hv**2 + s_pm**2 + s_rl**2)
    signif = -w / sig if (w < 0 and sig > 0) else 0.0
    return WitnessResult(w, sig, signif, v_hv, v_pm, v_rl, s_hv, s_pm, s_rl)


def witness_from_counts(counts: CorrelationCounts, kind: BellKind) -> WitnessResult:
    vs, ss = [], []
    for b in WITNESS_BASES:
        v, s = basis_visibility(counts.get(kind, b.name, b.name), kind, b)
        vs.append(v)
        ss.append(s)
    return witness(*vs, sigmas=ss)


def correlation_E(cells) -> float:
    c = np.asarray(cells, dtype=float)
    n = c.sum()
    if n <= 0:
        raise StatsError("correlation undefined for zero total counts")
    return float((c[0] + c[3] - c[1] - c[2]) / n)


def correlation_sigma(cells) -> float:
    c = np.asarray(cells, dtype=float)
    n = c.sum()
    e = correlation_E(c)
    return math.sqrt(max(0.0, 1.0 - e * e) / n)


@dataclass(frozen=True)
class ChshResult:
    S: float
    sigma: float
    E: Tuple[float, float, float, float]
    settings: Tuple[Tuple[str, str], ...]
    kind: BellKind

    @property
    def violation_sigmas(self) -> float:
        return (self.S - 2.0) / self.sigma if self.sigma > 0 else float("inf")


def chsh(cells_by_pair: Mapping[Tuple[str, str], Iterable], kind: BellKind = BellKind.PSI_MINUS) -> ChshResult:
    """CHSH value from the tallies of the four setting pairs, keyed by basis names."""
    es, vs = [], []
    names = tuple((a.name, b.name) for a, b in CHSH_PAIRS)
    for pair in names:
        if pair not in cells_by_pair:
            raise StatsError(f"missing setting pair {pair}")
        cells = np.asarray(cells_by_pair[pair], dtype=float)
        es.append(correlation_E(cells))
        vs.append(correlation_sigma(cells) ** 2)
    signs = CHSH_SIGNS[BellKind(kind)]
    s = float(abs(sum(sg * e for sg, e in zip(signs, es))))
    return ChshResult(s, math.sqrt(sum(vs)), tuple(es), names, BellKind(kind))


def chsh_from_counts(counts: CorrelationCounts, kind: BellKind) -> ChshResult:
    return chsh({(a.name, b.name): counts.get(kind, a.name, b.name) for a, b in CHSH_PAIRS}, kind)


def spacelike_check(distance_km: float, t_a_ns: float, t_b_ns: float) -> bool:
    """True when the two events lie outside each other's light cones."""
    if distance_km <= 0:
        raise StatsError("distance must be positive")
    return C_VACUUM * abs(t_a_ns - t_b_ns) * 1e-9 < distance_km * 1e3


def subtract_accidentals(counts: CorrelationCounts, n_accidental: float) -> CorrelationCounts:
    """Remove an accidental estimate spread uniformly over outcome cells, in proportion to each setting's share."""
    total = counts.total()
    out = CorrelationCounts()
    for key, cells in counts.cells.items():
        share = cells.sum() / total if total else 0.0
        out.cells[key] = np.maximum(cells - n_accidental * share / 4.0, 0.0)
    return out


Statistic = Union[str, Callable[[CorrelationCounts], float]]


def _statistic(name: Statistic, kind: BellKind) -> Callable[[CorrelationCounts], float]:
    if callable(name):
        return name
    if name == "W":
        return lambda c: witness_from_counts(c, kind).W
    if name == "V":
        return lambda c: witness_from_counts(c, kind).v_mean
    if name == "S":
        return lambda c: chsh_from_counts(c, kind).S
    raise StatsError(f"unknown statistic {name!r}")


MIN_BOOTSTRAP_EVENTS = 100


def bootstrap_sigma(counts: CorrelationCounts, statistic: Statistic, resamples: int = 200,
                    kind: BellKind = BellKind.PSI_MINUS, seed: int = 0) -> float:
    """Multinomial bootstrap of ``statistic`` over all tallied cells of ``kind``."""
    if resamples <= 0:
        raise StatsError("resamples must be positive")
    kind = BellKind(kind)
    keys = [k for k in counts.keys() if k[0] == kind]
    flat = np.concatenate([counts.cells[k] for k in keys]) if keys else np.zeros(0)
    n = int(flat.sum())
    if n < MIN_BOOTSTRAP_EVENTS:
        raise StatsError(f"bootstrap needs at least {MIN_BOOTSTRAP_EVENTS} events, got {n}")
    fn = _statistic(statistic, kind)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    draws = rng.multinomial(n, flat / n, size=resamples)
    values = []
    for d in draws:
        c = CorrelationCounts({k: d[4 * i: 4 * i + 4] for i, k in enumerate(keys)})
        try:
            values.append(fn(c))
        except StatsError:
            continue
    if len(values) < 2:
        raise StatsError("bootstrap statistic undefined on resampled counts")
    return float(np.std(values, ddof=1))


__all__ = [
    "CorrelationCounts", "WitnessResult", "ChshResult", "StatsError", "visibility", "basis_visibility",
    "witness", "witness_from_counts", "correlation_E", "correlation_sigma", "chsh", "chsh_from_counts",
    "spacelike_check", "subtract_accidentals", "bootstrap_sigma", "CHSH_PAIRS", "CHSH_SIGNS", "WITNESS_BASES",
    "NAMED_BASES", "A0", "A1", "B0", "B1",
]
