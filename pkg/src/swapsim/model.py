"""Exact expectation of the per-pulse click logic.

Mirrors the pulse-resolution kernel branch by branch, weighting each branch
by its probability instead of drawing uniforms. Multi-click orderings are
taken as uniformly random, and at most one BSM record is formed per pulse.
Used for rate budgets, visibility calibration and parameter sweeps, where a
noise-free answer is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations, product
from typing import Dict, Tuple

import numpy as np
from scipy import optimize

from .config import ExperimentConfig
from .link import transmission
from .qstate import BellKind, MeasBasis, born_probabilities, correlation_sign, swapped_mixture
from .stats import WITNESS_BASES
from .sources import detected_class_table, effective_overlap

BSM_BITS = (1, 2, 4, 8)  # a, b, c, d
BIT_E, BIT_F, BIT_G, BIT_H = 16, 32, 64, 128
VALID = {frozenset((0, 3)): 0, frozenset((1, 2)): 0, frozenset((0, 1)): 1, frozenset((2, 3)): 1}
MIN_CLASS_PROB = 1e-14


def _det_bit(arm: int, pol: int) -> int:
    return BSM_BITS[2 * arm + pol]


def _outcome_split(plus_probs):
    """P(only '+' detector clicks), P(only '-'), P(both) for independent photons."""
    if not plus_probs:
        return 0.0, 0.0, 0.0
    p_all_plus = math.prod(plus_probs)
    p_all_minus = math.prod(1.0 - p for p in plus_probs)
    return p_all_plus, p_all_minus, max(0.0, 1.0 - p_all_plus - p_all_minus)


def mask_distribution(cls_row, m: float, pj: np.ndarray, pa_plus, pb_plus) -> Dict[int, float]:
    """Distribution of the 8-bit click mask for one pulse of the given detected-photon class."""
    s1b, s1o, s1a, s2b, s2o, s2a = (int(v) for v in cls_row)
    n1, n2 = s1b + s1o, s2b + s2o
    n_al, n_bo = s1b + s1a, s2b + s2a
    # state: (bits, alice spec tuple, bob spec tuple, j1, j2) where spec entries are
    # ('o', outcome) fixed outcome, ('p', pol) known polarization, or None
    states: Dict[tuple, float] = {}

    def push(key, p):
        if p > 0:
            states[key] = states.get(key, 0.0) + p

    base_a = [None] * n_al
    base_b = [None] * n_bo
    if n1 > 0 and n2 > 0:
        w = 1.0 / (n1 * n2)
        p_bunch = 0.25 * (1.0 + m)
        p_split = 0.25 * (1.0 - m)
        for j1 in range(n1):
            for j2 in range(n2):
                has_a, has_b = j1 < s1b, j2 < s2b
                for kind in (0, 1):
                    pats = ((1 | 8), (2 | 4)) if kind == 0 else ((1 | 2), (4 | 8))
                    for bits in pats:
                        pk = w * 0.25 * 0.5
                        if has_a and has_b:
                            for cell in range(4):
                                a, b = list(base_a), list(base_b)
                                a[j1] = ("o", cell >> 1)
                                b[j2] = ("o", cell & 1)
                                push((bits, tuple(a), tuple(b), j1, j2), pk * pj[kind, cell])
                        elif has_a:
                            for o in (0, 1):
                                a = list(base_a)
                                a[j1] = ("o", o)
                                push((bits, tuple(a), tuple(base_b), j1, j2), pk * 0.5)
                        elif has_b:
                            for o in (0, 1):
                                b = list(base_b)
                                b[j2] = ("o", o)
                                push((bits, tuple(base_a), tuple(b), j1, j2), pk * 0.5)
                        else:
                            push((bits, tuple(base_a), tuple(base_b), j1, j2), pk)
                for d in range(4):
                    pol = d & 1
                    a, b = list(base_a), list(base_b)
                    if has_a:
                        a[j1] = ("p", 1 - pol)
                    if has_b:
                        b[j2] = ("p", 1 - pol)
                    push((1 << d, tuple(a), tuple(b), j1, j2), w * p_bunch * 0.25)
                for pol in (0, 1):
                    a, b = list(base_a), list(base_b)
                    if has_a:
                        a[j1] = ("p", 1 - pol)
                    if has_b:
                        b[j2] = ("p", 1 - pol)
                    push(((1 | 4) if pol == 0 else (2 | 8), tuple(a), tuple(b), j1, j2), w * p_split * 0.5)
    else:
        push((0, tuple(base_a), tuple(base_b), -1, -1), 1.0)

    out: Dict[int, float] = {}
    for (bits, aspec, bspec, j1, j2), p in states.items():
        extras = [(1, k) for k in range(n1) if k != j1] + [(2, k) for k in range(n2) if k != j2]
        for choice in product(range(4), repeat=len(extras)):
            ebits = bits
            a, b = list(aspec), list(bspec)
            for (src, k), c in zip(extras, choice):
                arm, pol = c >> 1, c & 1
                ebits |= _det_bit(arm, pol)
                if src == 1 and k < s1b:
                    a[k] = ("p", 1 - pol)
                if src == 2 and k < s2b:
                    b[k] = ("p", 1 - pol)
            pe = p * 0.25 ** len(extras)
            a_split = _outcome_split([_plus_prob(x, pa_plus) for x in a])
            b_split = _outcome_split([_plus_prob(x, pb_plus) for x in b])
            a_opts = [(0, 1.0)] if not a else [(BIT_E, a_split[0]), (BIT_F, a_split[1]), (BIT_E | BIT_F, a_split[2])]
            b_opts = [(0, 1.0)] if not b else [(BIT_G, b_split[0]), (BIT_H, b_split[1]), (BIT_G | BIT_H, b_split[2])]
            for ab, pa_ in a_opts:
                for bb, pb_ in b_opts:
                    q = pe * pa_ * pb_
                    if q > 0:
                        mask = ebits | ab | bb
                        out[mask] = out.get(mask, 0.0) + q
    return out


def _plus_prob(spec, table) -> float:
    if spec is None:
        return 0.5
    tag, v = spec
    if tag == "o":
        return 1.0 if v == 0 else 0.0
    return float(table[v])


@lru_cache(maxsize=None)
def _bsm_kind_probs(bsm_bits: int) -> Tuple[float, float]:
    """P(first greedy record is singlet / triplet) under uniformly random click order."""
    clicked = [k for k in range(4) if bsm_bits & (1 << k)]
    if len(clicked) < 2:
        return 0.0, 0.0
    res = [0.0, 0.0]
    perms = list(permutations(clicked))
    for order in perms:
        kind = None
        for i, ci in enumerate(order):
            for cj in order[i + 1:]:
                kind = VALID.get(frozenset((ci, cj)))
                if kind is not None:
                    break
            if kind is not None:
                break
        if kind is not None:
            res[kind] += 1.0 / len(perms)
    return res[0], res[1]


def record_cells(mask_dist: Dict[int, float]) -> np.ndarray:
    """(2, 4) probabilities of a 4-fold record by kind and outcome cell (++, +-, -+, --)."""
    cells = np.zeros((2, 4))
    for mask, p in mask_dist.items():
        ks, kt = _bsm_kind_probs(mask & 15)
        if ks + kt == 0:
            continue
        e, f, g, h = (mask >> 4) & 1, (mask >> 5) & 1, (mask >> 6) & 1, (mask >> 7) & 1
        if not (e or f) or not (g or h):
            continue
        pa = (1.0, 0.0) if not f else (0.0, 1.0) if not e else (0.5, 0.5)
        pb = (1.0, 0.0) if not h else (0.0, 1.0) if not g else (0.5, 0.5)
        for ia in (0, 1):
            for ib in (0, 1):
                w = p * pa[ia] * pb[ib]
                cells[0, 2 * ia + ib] += w * ks
                cells[1, 2 * ia + ib] += w * kt
    return cells


def threefold_prob(mask_dist: Dict[int, float]) -> float:
    total = 0.0
    for mask, p in mask_dist.items():
        ks, kt = _bsm_kind_probs(mask & 15)
        if (mask & (BIT_E | BIT_F)) and ks + kt > 0:
            total += p * (ks + kt)
    return total


def _tables(m, basis_a, basis_b):
    pj = np.array([
        born_probabilities(swapped_mixture(m, BellKind.PSI_MINUS), basis_a, basis_b),
        born_probabilities(swapped_mixture(m, BellKind.PSI_PLUS), basis_a, basis_b),
    ])
    pa = (abs(basis_a.plus[0]) ** 2, abs(basis_a.plus[1]) ** 2)
    pb = (abs(basis_b.plus[0]) ** 2, abs(basis_b.plus[1]) ** 2)
    return pj, pa, pb


@dataclass
class PulseExpectation:
    cells: np.ndarray  # (2, 4) 4-fold record probability per pulse
    threefold: float  # local 3-fold probability per pulse
    bob_click: float  # probability of a Bob click per pulse

    @property
    def fourfold(self) -> float:
        return float(self.cells.sum())


def pulse_expectation(source, eta_local: float, eta_bob: float, m: float,
                      basis_a: MeasBasis, basis_b: MeasBasis) -> PulseExpectation:
    c1, p1 = detected_class_table(source, eta_local, eta_local)
    c2, p2 = detected_class_table(source, eta_local, eta_bob)
    pj, pa, pb = _tables(m, basis_a, basis_b)
    cells = np.zeros((2, 4))
    three = 0.0
    bob = 0.0
    for r1, q1 in zip(c1, p1):
        for r2, q2 in zip(c2, p2):
            q = q1 * q2
            if q < MIN_CLASS_PROB:
                continue
            row = tuple(r1) + tuple(r2)
            if row[3] + row[5] > 0:
                bob += q
            n_bsm = row[0] + row[1] + row[3] + row[4]
            if n_bsm < 2 or row[0] + row[2] == 0:
                continue
            dist = mask_distribution(row, m, pj, pa, pb)
            cells += q * record_cells(dist)
            three += q * threefold_prob(dist)
    return PulseExpectation(cells, three, bob)


class FourfoldModel:
    """Expected 4-fold statistics of a scenario, with dark-count accidentals in remote mode."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.m = effective_overlap(cfg.source, cfg.hom)
        self.remote = cfg.mode == "remote"
        self.t_bob = float(transmission(cfg.mean_loss_db)) if self.remote else 1.0
        self._cache = {}

    def expectation(self, basis_a: MeasBasis, basis_b: MeasBasis) -> PulseExpectation:
        key = (basis_a.name, basis_b.name)
        if key not in self._cache:
            self._cache[key] = pulse_expectation(self.cfg.source, self.cfg.eta_local,
                                                 self.cfg.eta_local * self.t_bob, self.m, basis_a, basis_b)
        return self._cache[key]

    def accidental_fraction(self, basis_a: MeasBasis, basis_b: MeasBasis) -> float:
        cfg = self.cfg
        ex = self.expectation(basis_a, basis_b)
        dark = cfg.dark_rate_remote_hz if self.remote else cfg.dark_rate_local_hz
        r3 = ex.threefold * cfg.rep_rate_hz
        r_bob = ex.bob_click * cfg.rep_rate_hz + 2 * dark
        acc = r3 * r_bob * cfg.fourfold_window_ns * 1e-9
        true = ex.fourfold * cfg.rep_rate_hz
        return acc / (acc + true) if acc + true > 0 else 0.0

    def fourfold_rate_hz(self, basis_a: MeasBasis, basis_b: MeasBasis) -> float:
        return self.expectation(basis_a, basis_b).fourfold * self.cfg.rep_rate_hz

    def visibility(self, kind: BellKind, basis: MeasBasis, with_accidentals: bool = True) -> float:
        ex = self.expectation(basis, basis)
        c = ex.cells[0 if kind == BellKind.PSI_MINUS else 1]
        same, diff = c[0] + c[3], c[1] + c[2]
        v = (same - diff) / (same + diff)
        v *= correlation_sign(kind, basis)
        if with_accidentals:
            v *= 1.0 - self.accidental_fraction(basis, basis)
        return float(v)

    def mean_visibility(self, kind: BellKind = BellKind.PSI_MINUS, bases=None, with_accidentals=True) -> float:
        bases = bases or WITNESS_BASES
        return float(np.mean([self.visibility(kind, b, with_accidentals) for b in bases]))


def calibrate_v0(cfg: ExperimentConfig, target: float, kind: BellKind = BellKind.PSI_MINUS,
                 bases=None, tol: float = 1e-6) -> float:
    """Intrinsic source visibility that makes the expected mean visibility equal ``target``."""
    def f(v0):
        return FourfoldModel(cfg.replace(intrinsic_visibility=float(v0))).mean_visibility(kind, bases) - target

    lo, hi = 0.0, 1.0
    if f(hi) < 0:
        raise ValueError(f"target visibility {target} unreachable (max {f(hi) + target:.4f})")
    if f(lo) > 0:
        raise ValueError(f"target visibility {target} below the model floor {f(lo) + target:.4f}")
    return float(optimize.brentq(f, lo, hi, xtol=tol))


__all__ = [
    "mask_distribution", "record_cells", "pulse_expectation", "PulseExpectation", "FourfoldModel", "calibrate_v0",
]
