import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swapsim.qstate import (
    HV, MUB, PM, RL, BellKind, DensityOp, MeasBasis, PureState, QStateError,
    bell_overlap, bell_state, born_probabilities, bsm_project, swap_input,
    swapped_mixture, tensor, werner_state,
)

H = 1 / math.sqrt(2)
PSI_M, PSI_P, PHI_P, PHI_M = BellKind.PSI_MINUS, BellKind.PSI_PLUS, BellKind.PHI_PLUS, BellKind.PHI_MINUS


def _hv_visibility(probs):
    return abs((probs[1] + probs[2]) - (probs[0] + probs[3]))


def test_singlet_amplitudes():
    np.testing.assert_allclose(bell_state(PSI_M, (0, 1)).amplitudes, [0, H, -H, 0], atol=1e-15)


def test_phi_plus_amplitudes():
    np.testing.assert_allclose(bell_state(PHI_P, (1, 2)).amplitudes, [H, 0, 0, H], atol=1e-15)


def test_bell_states_orthonormal():
    for a, b in itertools.product(BellKind, BellKind):
        ip = bell_state(a, (0, 1)).inner(bell_state(b, (0, 1)))
        assert abs(ip - (1.0 if a is b else 0.0)) < 1e-12


def test_duplicate_labels_rejected():
    with pytest.raises(QStateError):
        bell_state(PSI_M, (1, 1))


def test_tensor_dimension_and_overlap_check():
    s = tensor(bell_state(PSI_M, (0, 1)), bell_state(PSI_M, (2, 3)))
    assert s.amplitudes.size == 16 and s.labels == (0, 1, 2, 3)
    with pytest.raises(QStateError):
        tensor(bell_state(PSI_M, (0, 1)), bell_state(PSI_M, (1, 2)))


def test_unnormalized_state_rejected():
    with pytest.raises(QStateError):
        PureState((0, 1), [1, 1, 0, 0])


# overlap table of the ideal product state in the (0,3)x(1,2) decomposition
OVERLAPS = {
    (PSI_P, PSI_P): 0.5,
    (PSI_M, PSI_M): -0.5,
    (PHI_P, PHI_P): -0.5,
    (PHI_M, PHI_M): 0.5,
}


@pytest.mark.parametrize("outer,inner", list(itertools.product(BellKind, BellKind)))
def test_overlap_table(outer, inner):
    amp = bell_overlap(swap_input(), outer, inner)
    assert abs(amp - OVERLAPS.get((outer, inner), 0.0)) < 1e-12


def test_swap_identity_reconstructs_product():
    rebuilt = np.zeros(16, dtype=complex)
    for (outer, inner), c in OVERLAPS.items():
        term = tensor(bell_state(outer, (0, 3)), bell_state(inner, (1, 2))).reorder((0, 1, 2, 3))
        rebuilt += c * term.amplitudes
    assert np.max(np.abs(rebuilt - swap_input().amplitudes)) < 1e-12


@pytest.mark.parametrize("kind", list(BellKind))
def test_bsm_quarter_and_fidelity(kind):
    p, cond = bsm_project(swap_input(), kind)
    assert abs(p - 0.25) < 1e-12
    assert abs(abs(cond.inner(bell_state(kind, (0, 3)))) ** 2 - 1) < 1e-12


def test_bsm_zero_branch_is_an_error():
    # |HV>_01 |HV>_23 has photons 1,2 in VH: no Phi component
    state = PureState.basis((0, 1, 2, 3), "HVHV")
    with pytest.raises(QStateError):
        bsm_project(state, PHI_P)


def _random_state(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=16) + 1j * rng.normal(size=16)
    return PureState.from_unnormalized((0, 1, 2, 3), v)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bsm_probabilities_complete(seed):
    state = _random_state(seed)
    assert abs(sum(bsm_project(state, k)[0] for k in BellKind) - 1) < 1e-12


def test_bases_mutually_unbiased():
    for a, b in itertools.combinations(MUB, 2):
        for u in a.kets():
            for v in b.kets():
                assert abs(abs(np.vdot(u, v)) ** 2 - 0.5) < 1e-12


def test_singlet_hv_anticorrelated():
    np.testing.assert_allclose(born_probabilities(bell_state(PSI_M, (0, 3)), HV, HV), [0, 0.5, 0.5, 0], atol=1e-12)


@pytest.mark.parametrize("a,b", [(0.0, 0.3), (0.2, 1.4), (math.pi / 8, 3 * math.pi / 8), (1.0, -0.7)])
def test_singlet_linear_coincidence(a, b):
    p = born_probabilities(bell_state(PSI_M, (0, 3)), MeasBasis.linear(a), MeasBasis.linear(b))
    # ++ coincidence from direct projector algebra
    assert abs(p[0] - 0.5 * math.sin(a - b) ** 2) < 1e-12
    assert abs((p[0] + p[3] - p[1] - p[2]) + math.cos(2 * (a - b))) < 1e-12


def _analytic_mixture_visibilities(m):
    # explicit correlators of m|psi-><psi-| + (1-m)(|HV><HV|+|VH><VH|)/2
    zz = -1.0
    xx = -m  # <sigma_x sigma_x>: only the coherence term contributes
    yy = -m
    return abs(zz), abs(xx), abs(yy)


@pytest.mark.parametrize("m", [round(0.1 * k, 1) for k in range(11)])
def test_swapped_mixture_visibilities(m):
    rho = swapped_mixture(m, PSI_M)
    v = [_hv_visibility(born_probabilities(rho, b, b)) for b in MUB]
    np.testing.assert_allclose(v, _analytic_mixture_visibilities(m), atol=1e-12)


def test_swapped_mixture_pm_probabilities():
    p = born_probabilities(swapped_mixture(0.6, PSI_M), PM, PM)
    assert abs(p[1] - 0.4) < 1e-12 and abs(p[2] - 0.4) < 1e-12


def test_swapped_mixture_phi_kind():
    rho = swapped_mixture(0.3, PHI_P)
    p = born_probabilities(rho, HV, HV)
    assert abs(p[0] - 0.5) < 1e-12 and abs(p[3] - 0.5) < 1e-12
    assert abs(_hv_visibility(born_probabilities(rho, PM, PM)) - 0.3) < 1e-12


@pytest.mark.parametrize("m", [-0.01, 1.01])
def test_swapped_mixture_range(m):
    with pytest.raises(QStateError):
        swapped_mixture(m, PSI_M)


def test_non_psd_density_rejected():
    with pytest.raises(QStateError):
        DensityOp((0, 1), np.diag([1.5, -0.5, 0, 0]))


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, math.pi), st.floats(0, math.pi), st.floats(0, math.pi))
def test_no_signalling(v, a, b1, b2):
    rho = werner_state(v, PSI_M)
    pa = MeasBasis.linear(a)
    p1 = born_probabilities(rho, pa, MeasBasis.linear(b1))
    p2 = born_probabilities(rho, pa, RL if b2 > 1 else MeasBasis.linear(b2))
    assert abs((p1[0] + p1[1]) - (p2[0] + p2[1])) < 1e-12
    assert abs(p1.sum() - 1) < 1e-12


def test_werner_visibility_isotropic():
    rho = werner_state(0.7, PSI_M)
    for b in MUB:
        assert abs(_hv_visibility(born_probabilities(rho, b, b)) - 0.7) < 1e-12


def test_psi_plus_sign_pattern():
    rho = bell_state(PSI_P, (0, 3))
    hv, pm, rl = (born_probabilities(rho, b, b) for b in MUB)
    assert hv[1] + hv[2] > 0.99
    assert pm[0] + pm[3] > 0.99
    assert rl[0] + rl[3] > 0.99
