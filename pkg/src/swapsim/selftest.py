"""Quick invariant checks run by ``swapsim selftest``."""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import kernels
from .qstate import (
    MUB, BellKind, bell_overlap, bell_state, born_probabilities, bsm_project, swap_input, tensor, werner_state,
)
from .stats import CHSH_PAIRS, chsh, witness
from .tagfile import decode, encode
from .tagstream import Recorder, TagStream


def _swap_identity():
    state = swap_input()
    rebuilt = np.zeros(16, dtype=complex)
    for outer, inner in itertools.product(BellKind, BellKind):
        amp = bell_overlap(state, outer, inner)
        pair = tensor(bell_state(outer, (0, 3)), bell_state(inner, (1, 2))).reorder((0, 1, 2, 3))
        rebuilt += amp * pair.amplitudes
    err = float(np.max(np.abs(rebuilt - state.amplitudes)))
    return err < 1e-12, f"max error {err:.2e}"


def _bsm_quarter():
    probs = [bsm_project(swap_input(), k)[0] for k in BellKind]
    ok = all(abs(p - 0.25) < 1e-12 for p in probs)
    return ok, "probabilities " + ", ".join(f"{p:.6f}" for p in probs)


def _mub():
    worst = 0.0
    for a, b in itertools.combinations(MUB, 2):
        for u in (a.plus, a.minus):
            for v in (b.plus, b.minus):
                worst = max(worst, abs(abs(np.vdot(u, v)) ** 2 - 0.5))
    return worst < 1e-12, f"max deviation {worst:.1e}"


def _isolines():
    w = witness(1 / 3, 1 / 3, 1 / 3).W
    rho = werner_state(1 / math.sqrt(2), BellKind.PSI_MINUS)
    s = chsh({(a.name, b.name): born_probabilities(rho, a, b) for a, b in CHSH_PAIRS}).S
    return abs(w) < 1e-12 and abs(s - 2.0) < 1e-12, f"W(1/3)={w:.1e}, S(1/sqrt2)={s:.12f}"


def _tag_roundtrip(seed):
    rng = np.random.default_rng(seed)
    n = 10_000
    tags = np.sort(rng.integers(0, 2**40, n))
    chans = rng.integers(0, 6, n).astype(np.uint8)
    truth = np.where(rng.random(n) < 0.5, rng.integers(0, 2**45, n), -1)
    s = TagStream(Recorder.LAPALMA, tags, chans, truth)
    data = encode(s)
    back, _ = decode(data)
    return encode(back) == data, f"{len(data)} bytes"


def _backend():
    return True, f"kernels: {kernels.BACKEND}"


def run_checks(seed: int = 1):
    checks = [
        ("swap-identity", _swap_identity),
        ("bsm-branching", _bsm_quarter),
        ("mutually-unbiased", _mub),
        ("isolines", _isolines),
        ("tagfile-roundtrip", lambda: _tag_roundtrip(seed)),
        ("kernel-backend", _backend),
    ]
    out = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
