"""Pulsed SPDC source models: pair-number statistics, HOM overlap, rate calibration."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import product

import numpy as np

MAX_PAIR_PROB = 0.1
N_MAX = 4


class SourceError(ValueError):
    pass


class StatModel(str, enum.Enum):
    POISSONIAN = "poissonian"
    THERMAL = "thermal"


@dataclass(frozen=True)
class SourceParams:
    pair_prob: float
    intrinsic_visibility: float = 1.0
    stat_model: StatModel = StatModel.POISSONIAN

    def __post_init__(self):
        if not 0.0 <= self.pair_prob < MAX_PAIR_PROB:
            raise SourceError(
                f"pair_prob must lie in [0, {MAX_PAIR_PROB}), got {self.pair_prob}"
            )
        if not 0.0 <= self.intrinsic_visibility <= 1.0:
            raise SourceError(f"intrinsic_visibility must lie in [0, 1], got {self.intrinsic_visibility}")
        object.__setattr__(self, "stat_model", StatModel(self.stat_model))


@dataclass(frozen=True)
class HomParams:
    delta_l_mm: float = 0.0
    center_wavelength_nm: float = 808.0
    filter_fwhm_nm: float = 3.0
    width_scale: float = 1.0

    def __post_init__(self):
        if self.filter_fwhm_nm <= 0:
            raise SourceError("filter FWHM must be positive")
        if self.width_scale <= 0:
            raise SourceError("width_scale must be positive")

    @property
    def coherence_length_mm(self) -> float:
        return (self.center_wavelength_nm ** 2 / self.filter_fwhm_nm) * 1e-6


@dataclass(frozen=True)
class PulseEmission:
    pulse_index: int
    n_pairs_src1: int
    n_pairs_src2: int


def pair_count_distribution(params: SourceParams, n_max: int = N_MAX) -> np.ndarray:
    """P(n pairs in one pulse) for n = 0..n_max, tail folded in by renormalizing."""
    p = params.pair_prob
    n = np.arange(n_max + 1)
    if p == 0.0:
        probs = np.zeros(n_max + 1)
        probs[0] = 1.0
        return probs
    if params.stat_model is StatModel.POISSONIAN:
        logp = -p + n * math.log(p) - np.array([math.lgamma(k + 1) for k in n])
        probs = np.exp(logp)
    else:
        x = p / (1.0 + p)  # mean x/(1-x) equals p
        probs = (1.0 - x) * x ** n
    return probs / probs.sum()


def hom_overlap(h: HomParams) -> float:
    sigma = h.width_scale * h.coherence_length_mm / math.sqrt(8.0 * math.log(2.0))
    return math.exp(-(h.delta_l_mm ** 2) / (2.0 * sigma ** 2))


def effective_overlap(source: SourceParams, h: HomParams) -> float:
    return source.intrinsic_visibility * hom_overlap(h)


def calibrate_pair_prob(two_fold_rate: float, rep_rate: float, eta_local: float = 1.0) -> float:
    """Per-pulse pair probability that yields ``two_fold_rate`` detected 2-folds."""
    if rep_rate <= 0 or not 0 < eta_local <= 1:
        raise SourceError("rep_rate must be positive and eta_local in (0, 1]")
    if not 0 <= two_fold_rate < rep_rate:
        raise SourceError("two_fold_rate must be below the repetition rate")
    p = two_fold_rate / (rep_rate * eta_local ** 2)
    if p >= MAX_PAIR_PROB:
        raise SourceError(
            f"calibrated pair_prob {p:.4g} leaves the perturbative regime (>= {MAX_PAIR_PROB})"
        )
    return p


def two_fold_rate(pair_prob: float, rep_rate: float, eta_local: float = 1.0) -> float:
    return pair_prob * rep_rate * eta_local ** 2


def pulse_rng(seed: int, pulse_index: int) -> np.random.Generator:
    """Counter-based stream: one independent generator per pulse index."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, pulse_index]))


def sample_pulse(src1: SourceParams, src2: SourceParams, seed: int, pulse_index: int) -> PulseEmission:
    u1, u2 = pulse_rng(seed, pulse_index).random(2)
    n1 = int(np.searchsorted(np.cumsum(pair_count_distribution(src1)), u1, side="right"))
    n2 = int(np.searchsorted(np.cumsum(pair_count_distribution(src2)), u2, side="right"))
    return PulseEmission(pulse_index, min(n1, N_MAX), min(n2, N_MAX))


def detected_class_table(params: SourceParams, eta_bsm: float, eta_outer: float, n_max: int = N_MAX):
    """Joint law of detected-photon classes for one source per pulse.

    Every emitted pair lands independently in one of four classes: both
    photons detected, only the BSM-side photon, only the outer (Alice/Bob)
    photon, or neither. Returns ``(classes, probs)`` where ``classes`` rows
    are ``(n_both, n_bsm_only, n_outer_only)``.
    """
    pn = pair_count_distribution(params, n_max)
    q = np.array([
        eta_bsm * eta_outer,
        eta_bsm * (1 - eta_outer),
        (1 - eta_bsm) * eta_outer,
        (1 - eta_bsm) * (1 - eta_outer),
    ])
    table: dict[tuple, float] = {}
    for n, p_n in enumerate(pn):
        if p_n == 0.0:
            continue
        for k in product(range(n + 1), repeat=3):
            rest = n - sum(k)
            if rest < 0:
                continue
            coeff = math.factorial(n) / (
                math.factorial(k[0]) * math.factorial(k[1]) * math.factorial(k[2]) * math.factorial(rest)
            )
            prob = p_n * coeff * q[0] ** k[0] * q[1] ** k[1] * q[2] ** k[2] * q[3] ** rest
            table[k] = table.get(k, 0.0) + prob
    classes = np.array(sorted(table), dtype=np.int64)
    probs = np.array([table[tuple(c)] for c in classes])
    return classes, probs
