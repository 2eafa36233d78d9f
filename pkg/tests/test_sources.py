import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from swapsim.sources import (
    HomParams, SourceError, SourceParams, StatModel, calibrate_pair_prob,
    detected_class_table, effective_overlap, hom_overlap, pair_count_distribution,
    sample_pulse, two_fold_rate,
)


def test_zero_pair_prob():
    probs = pair_count_distribution(SourceParams(0.0))
    assert probs[0] == 1 and probs[1:].sum() == 0


def test_poisson_values():
    probs = pair_count_distribution(SourceParams(0.001))
    oracle = sps.poisson.pmf(np.arange(5), 0.001)
    assert abs(probs[1] - 9.99e-4) < 1e-6
    assert abs(probs[2] - 5.0e-7) < 1e-9
    np.testing.assert_allclose(probs, oracle / oracle.sum(), rtol=1e-12)


def test_thermal_ratio_and_mean():
    probs = pair_count_distribution(SourceParams(0.001, stat_model=StatModel.THERMAL), n_max=30)
    assert abs(probs[2] / probs[1] - 1e-3) < 2e-6
    assert abs(np.dot(np.arange(31), probs) - 0.001) < 1e-12


@pytest.mark.parametrize("model", list(StatModel))
@pytest.mark.parametrize("p", [1e-5, 1.625e-3, 0.05, 0.0999])
def test_distribution_normalized(model, p):
    assert abs(pair_count_distribution(SourceParams(p, stat_model=model)).sum() - 1) < 1e-12


@pytest.mark.parametrize("p", [0.1, 0.5, -0.01])
def test_pair_prob_range(p):
    with pytest.raises(SourceError):
        SourceParams(p)


def test_coherence_length():
    assert abs(HomParams().coherence_length_mm - 0.2176) < 1e-4


def test_hom_overlap_values():
    lc = HomParams().coherence_length_mm
    assert hom_overlap(HomParams(0.0)) == 1.0
    assert abs(hom_overlap(HomParams(lc)) - 0.0625) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_hom_even_and_decreasing(a, b):
    assert hom_overlap(HomParams(a)) == hom_overlap(HomParams(-a))
    lo, hi = sorted((a, b))
    if hi - lo > 1e-6 and hom_overlap(HomParams(hi)) > 1e-300:
        assert hom_overlap(HomParams(hi)) < hom_overlap(HomParams(lo))


def test_effective_overlap():
    lc = HomParams().coherence_length_mm
    assert effective_overlap(SourceParams(0.001, 1.0), HomParams(0.0)) == 1.0
    assert abs(effective_overlap(SourceParams(0.001, 0.95), HomParams(0.0)) - 0.95) < 1e-15
    assert abs(effective_overlap(SourceParams(0.001, 0.95), HomParams(lc)) - 0.0594) < 1e-4


@pytest.mark.parametrize("rate,p", [(15e3, 1.875e-4), (130e3, 1.625e-3), (240e3, 3.0e-3)])
def test_calibration(rate, p):
    got = calibrate_pair_prob(rate, 80e6, 1.0)
    assert abs(got - p) < 1e-15
    assert abs(two_fold_rate(got, 80e6, 1.0) - rate) < 1e-12 * rate


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 0.099), st.floats(0.2, 1.0))
def test_calibration_roundtrip(p, eta):
    rate = two_fold_rate(p, 80e6, eta)
    assert abs(calibrate_pair_prob(rate, 80e6, eta) / p - 1) < 1e-12
    assert abs(two_fold_rate(calibrate_pair_prob(rate, 80e6, eta), 80e6, eta) / rate - 1) < 1e-12


def test_calibration_leaving_regime():
    with pytest.raises(SourceError):
        calibrate_pair_prob(10e6, 80e6, 1.0)
    with pytest.raises(SourceError):
        calibrate_pair_prob(90e6, 80e6, 1.0)


def test_sample_pulse_deterministic():
    s = SourceParams(0.05)
    assert sample_pulse(s, s, 7, 12345) == sample_pulse(s, s, 7, 12345)
    z = SourceParams(0.0)
    assert all((sample_pulse(z, z, 1, i).n_pairs_src1, sample_pulse(z, z, 1, i).n_pairs_src2) == (0, 0)
               for i in range(200))


def test_sample_pulse_mean():
    p = 0.05
    s = SourceParams(p)
    n = 20_000
    draws = np.array([sample_pulse(s, s, 3, i).n_pairs_src1 for i in range(n)])
    se = math.sqrt(p / n)
    assert abs(draws.mean() - p) < 3 * se


def test_class_table_marginals():
    p, eb, eo = 0.05, 0.6, 0.3
    classes, probs = detected_class_table(SourceParams(p), eb, eo)
    assert abs(probs.sum() - 1) < 1e-12
    n_pairs = np.arange(5)
    mean_pairs = np.dot(n_pairs, pair_count_distribution(SourceParams(p)))
    # each emitted pair is thinned independently
    assert abs(np.dot(classes[:, 0], probs) - mean_pairs * eb * eo) < 1e-12
    assert abs(np.dot(classes[:, 1], probs) - mean_pairs * eb * (1 - eo)) < 1e-12
    assert abs(np.dot(classes[:, 2], probs) - mean_pairs * (1 - eb) * eo) < 1e-12
