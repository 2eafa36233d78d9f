"""Polarization-state algebra for up to four photons.

Amplitudes are stored over the H/V product basis in label order, with H=0
and V=1, so a two-photon vector is ordered (HH, HV, VH, VV).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

SQRT_HALF = 1.0 / math.sqrt(2.0)
NORM_TOL = 1e-12


class QStateError(ValueError):
    pass


class BellKind(enum.Enum):
    PSI_MINUS = "psi-"
    PSI_PLUS = "psi+"
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"

    @property
    def is_psi(self) -> bool:
        return self in (BellKind.PSI_MINUS, BellKind.PSI_PLUS)


_BELL_VECTORS = {
    BellKind.PSI_MINUS: np.array([0, SQRT_HALF, -SQRT_HALF, 0], dtype=complex),
    BellKind.PSI_PLUS: np.array([0, SQRT_HALF, SQRT_HALF, 0], dtype=complex),
    BellKind.PHI_PLUS: np.array([SQRT_HALF, 0, 0, SQRT_HALF], dtype=complex),
    BellKind.PHI_MINUS: np.array([SQRT_HALF, 0, 0, -SQRT_HALF], dtype=complex),
}


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    # first nonzero amplitude made real and non-negative
    nz = np.flatnonzero(np.abs(vec) > 1e-15)
    if nz.size == 0:
        return vec
    first = vec[nz[0]]
    return vec * (abs(first) / first)


@dataclass(frozen=True)
class PureState:
    labels: tuple
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if len(set(labels)) != len(labels):
            raise QStateError(f"duplicate photon labels {labels}")
        if amps.size != 2 ** len(labels):
            raise QStateError(
                f"{len(labels)} labels need {2 ** len(labels)} amplitudes, got {amps.size}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise QStateError(f"state is not normalized (norm^2={norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_unnormalized(cls, labels: Sequence, amplitudes) -> "PureState":
        amps = np.asarray(amplitudes, dtype=complex).ravel()
        norm = math.sqrt(float(np.vdot(amps, amps).real))
        if norm == 0.0:
            raise QStateError("zero vector cannot be normalized")
        return cls(tuple(labels), _fix_phase(amps / norm))

    @classmethod
    def basis(cls, labels: Sequence, pattern: str) -> "PureState":
        """Product state from a string such as ``"HV"``."""
        if len(pattern) != len(labels):
            raise QStateError("pattern length must match label count")
        idx = int(pattern.upper().replace("H", "0").replace("V", "1"), 2)
        amps = np.zeros(2 ** len(labels), dtype=complex)
        amps[idx] = 1.0
        return cls(tuple(labels), amps)

    @property
    def n_photons(self) -> int:
        return len(self.labels)

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_photons)

    def reorder(self, labels: Sequence) -> "PureState":
        labels = tuple(labels)
        if sorted(map(repr, labels)) != sorted(map(repr, self.labels)):
            raise QStateError(f"cannot reorder {self.labels} to {labels}")
        axes = [self.labels.index(lab) for lab in labels]
        return PureState(labels, np.transpose(self.tensor_view(), axes).ravel())

    def inner(self, other: "PureState") -> complex:
        """<self|other>, aligning other's labels to self's order."""
        other = other.reorder(self.labels)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density(self) -> "DensityOp":
        return DensityOp(self.labels, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityOp:
    labels: tuple
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        mat = np.array(self.matrix, dtype=complex)
        dim = 2 ** len(labels)
        if mat.shape != (dim, dim):
            raise QStateError(f"expected {dim}x{dim} matrix, got {mat.shape}")
        if np.max(np.abs(mat - mat.conj().T)) > NORM_TOL:
            raise QStateError("density operator is not Hermitian")
        if abs(np.trace(mat).real - 1.0) > NORM_TOL:
            raise QStateError("density operator trace is not 1")
        if np.linalg.eigvalsh(mat).min() < -1e-10:
            raise QStateError("density operator is not positive semidefinite")
        mat.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrix", mat)

    def fidelity_pure(self, psi: PureState) -> float:
        psi = psi.reorder(self.labels)
        return float(np.vdot(psi.amplitudes, self.matrix @ psi.amplitudes).real)


# -- measurement bases ---------------------------------------------------------


@dataclass(frozen=True)
class MeasBasis:
    """Two-outcome polarization analyzer.

    ``plus`` is the ket registered as the "+" outcome (detectors e / g),
    ``minus`` its orthogonal complement.
    """

    name: str
    plus: tuple
    minus: tuple

    @classmethod
    def linear(cls, angle: float, name: str | None = None) -> "MeasBasis":
        c, s = math.cos(angle), math.sin(angle)
        return cls(name or f"lin({angle:.6g})", (complex(c), complex(s)), (complex(-s), complex(c)))

    def kets(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.plus, dtype=complex), np.array(self.minus, dtype=complex)

    def __str__(self) -> str:
        return self.name


HV = MeasBasis.linear(0.0, "HV")
PM = MeasBasis.linear(math.pi / 4, "PM")
RL = MeasBasis("RL", (SQRT_HALF + 0j, -1j * SQRT_HALF), (SQRT_HALF + 0j, 1j * SQRT_HALF))
MUB = (HV, PM, RL)
BASES = {b.name: b for b in MUB}


def basis_from_name(name: str) -> MeasBasis:
    if name in BASES:
        return BASES[name]
    if name.startswith("lin(") and name.endswith(")"):
        return MeasBasis.linear(float(name[4:-1]))
    raise QStateError(f"unknown measurement basis {name!r}")


# -- operations ----------------------------------------------------------------


def bell_state(kind: BellKind, labels: Sequence) -> PureState:
    labels = tuple(labels)
    if len(labels) != 2:
        raise QStateError("a Bell state needs exactly two photon labels")
    if labels[0] == labels[1]:
        raise QStateError(f"duplicate photon label {labels[0]!r}")
    return PureState(labels, _BELL_VECTORS[kind].copy())


def tensor(a: PureState, b: PureState) -> PureState:
    overlap = set(a.labels) & set(b.labels)
    if overlap:
        raise QStateError(f"overlapping photon labels {sorted(overlap)}")
    return PureState(a.labels + b.labels, np.kron(a.amplitudes, b.amplitudes))


def swap_input(kind01: BellKind = BellKind.PSI_MINUS, kind23: BellKind = BellKind.PSI_MINUS) -> PureState:
    """Two independent pairs (0,1) and (2,3)."""
    return tensor(bell_state(kind01, (0, 1)), bell_state(kind23, (2, 3)))


def _require_swap_labels(state: PureState) -> None:
    if state.n_photons != 4 or set(state.labels) != {0, 1, 2, 3}:
        raise QStateError(f"expected a 4-photon state on labels 0..3, got {state.labels}")


def bell_overlap(state: PureState, outer_kind: BellKind, inner_kind: BellKind) -> complex:
    """Amplitude of |outer>_03 |inner>_12 in ``state``."""
    _require_swap_labels(state)
    proj = tensor(bell_state(outer_kind, (0, 3)), bell_state(inner_kind, (1, 2)))
    return proj.inner(state)


def bsm_project(state: PureState, outcome: BellKind) -> tuple[float, PureState]:
    """Project photons 1,2 onto ``outcome``; return (probability, state of 0,3)."""
    _require_swap_labels(state)
    t = state.reorder((1, 2, 0, 3)).amplitudes.reshape(4, 4)
    branch = _BELL_VECTORS[outcome].conj() @ t
    prob = float(np.vdot(branch, branch).real)
    if prob < 1e-15:
        raise QStateError(f"outcome {outcome.name} has zero probability; conditional state undefined")
    return prob, PureState.from_unnormalized((0, 3), branch)


def swapped_mixture(m: float, kind: BellKind, labels: Sequence = (0, 3)) -> DensityOp:
    """Entangled fraction ``m`` of ``kind`` plus the classically correlated remainder."""
    if not 0.0 <= m <= 1.0:
        raise QStateError(f"overlap must lie in [0, 1], got {m}")
    pure = bell_state(kind, labels).density().matrix
    classical = np.zeros((4, 4), dtype=complex)
    if kind.is_psi:
        classical[1, 1] = classical[2, 2] = 0.5
    else:
        classical[0, 0] = classical[3, 3] = 0.5
    return DensityOp(tuple(labels), m * pure + (1.0 - m) * classical)


def werner_state(v: float, kind: BellKind, labels: Sequence = (0, 3)) -> DensityOp:
    """Bell state with white noise; visibility ``v`` in every basis."""
    if not 0.0 <= v <= 1.0:
        raise QStateError(f"visibility must lie in [0, 1], got {v}")
    pure = bell_state(kind, labels).density().matrix
    return DensityOp(tuple(labels), v * pure + (1.0 - v) * np.eye(4) / 4.0)


def born_probabilities(rho: Union[DensityOp, PureState], basis_a: MeasBasis, basis_b: MeasBasis) -> np.ndarray:
    """Joint outcome probabilities ordered (++, +-, -+, --)."""
    if isinstance(rho, PureState):
        rho = rho.density()
    if len(rho.labels) != 2:
        raise QStateError("born_probabilities needs a two-photon state")
    ka, kb = basis_a.kets(), basis_b.kets()
    probs = np.empty(4)
    for i, va in enumerate(ka):
        for j, vb in enumerate(kb):
            v = np.kron(va, vb)
            probs[2 * i + j] = np.vdot(v, rho.matrix @ v).real
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def single_outcome_prob(pol: Sequence[complex], basis: MeasBasis) -> float:
    """Probability of the "+" outcome for a single photon in pure state ``pol``."""
    plus, _ = basis.kets()
    return float(abs(np.vdot(plus, np.asarray(pol, dtype=complex))) ** 2)


def correlation_sign(kind: BellKind, basis: MeasBasis) -> int:
    """-1 if ``kind`` is anticorrelated in ``basis``, +1 if correlated."""
    p = born_probabilities(bell_state(kind, (0, 3)).density(), basis, basis)
    return -1 if p[1] + p[2] > p[0] + p[3] else 1
