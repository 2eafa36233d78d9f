import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats as sps

from swapsim import kernels
from swapsim.model import mask_distribution
from swapsim.qstate import PM, RL
from swapsim.simulate import outcome_tables

py = kernels.get_backend("python")
try:
    cy = kernels.get_backend("cython")
except ImportError:
    cy = None
needs_cython = pytest.mark.skipif(cy is None, reason="compiled kernels not built")

ROWS = [(1, 0, 0, 1, 0, 0), (2, 0, 0, 1, 0, 1), (1, 1, 1, 1, 0, 1), (2, 1, 0, 0, 2, 1), (0, 1, 2, 1, 1, 0)]


def _resolve_inputs(n, seed):
    rng = np.random.default_rng(seed)
    cls = np.array(ROWS)[rng.integers(0, len(ROWS), n)].astype(np.int64)
    u = rng.random((n, kernels.N_UNIFORMS))
    pj, pa, pb = outcome_tables(0.7, PM, RL)
    return cls, u, 0.7, np.ascontiguousarray(pj), np.asarray(pa, float), np.asarray(pb, float)


def _click_stream(n, seed, n_chan=6, span=10**6):
    rng = np.random.default_rng(seed)
    return np.sort(rng.integers(0, span, n)).astype(np.int64), rng.integers(0, n_chan, n).astype(np.uint8)


@needs_cython
def test_resolve_identical():
    args = _resolve_inputs(20_000, 1)
    for a, b in zip(py.resolve_pulses(*args), cy.resolve_pulses(*args)):
        np.testing.assert_array_equal(a, b)


@needs_cython
def test_pair_bsm_identical():
    tags, chans = _click_stream(50_000, 2)
    for a, b in zip(py.pair_bsm(tags, chans, 40), cy.pair_bsm(tags, chans, 40)):
        np.testing.assert_array_equal(a, b)


@needs_cython
def test_match_and_diffs_identical():
    rng = np.random.default_rng(3)
    ta = np.sort(rng.random(5000) * 1e6)
    tb = np.sort(rng.random(8000) * 1e6)
    for a, b in zip(py.match_greedy(ta, tb, -50.0, 80.0), cy.match_greedy(ta, tb, -50.0, 80.0)):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(py.pair_diffs(ta, tb, -300.0, 300.0), cy.pair_diffs(ta, tb, -300.0, 300.0)):
        np.testing.assert_array_equal(a, b)


@needs_cython
def test_hough_identical():
    rng = np.random.default_rng(4)
    x = rng.random(3000) * 60.0
    diff = 120.0 + 3.0 * x + rng.normal(0, 0.5, x.size)
    diff[::3] = rng.random(1000) * 400.0
    ds = np.linspace(-5, 5, 201)
    assert py.hough_peak(x, diff, ds, 0.0, 2.0, 200) == cy.hough_peak(x, diff, ds, 0.0, 2.0, 200)


def test_pair_bsm_patterns():
    # a+d (psi-), b+c (psi-), a+b (psi+), c+d (psi+); a+c is not a valid pattern
    tags = np.array([0, 3, 100, 101, 200, 205, 300, 302, 400, 401], dtype=np.int64)
    chans = np.array([0, 3, 1, 2, 0, 1, 2, 3, 0, 2], dtype=np.uint8)
    t, k, i, j = kernels.pair_bsm(tags, chans, 10)
    np.testing.assert_array_equal(t, [0, 100, 200, 300])
    np.testing.assert_array_equal(k, [0, 0, 1, 1])
    np.testing.assert_array_equal(i, [0, 2, 4, 6])


def test_pair_bsm_window_edge():
    tags = np.array([0, 10, 100, 111], dtype=np.int64)
    chans = np.array([0, 3, 0, 3], dtype=np.uint8)
    t, *_ = kernels.pair_bsm(tags, chans, 10)
    np.testing.assert_array_equal(t, [0])


def test_pair_diffs_against_brute_force():
    rng = np.random.default_rng(5)
    a = np.sort(rng.random(400) * 1e4)
    b = np.sort(rng.random(500) * 1e4)
    idx, d = kernels.pair_diffs(a, b, -40.0, 25.0)
    full = b[None, :] - a[:, None]
    ii, jj = np.nonzero((full >= -40.0) & (full <= 25.0))
    assert sorted(zip(idx.tolist(), d.tolist())) == sorted(zip(ii.tolist(), full[ii, jj].tolist()))


def test_match_greedy_one_to_one():
    a = np.array([0.0, 1.0, 2.0])
    b = np.array([5.0, 5.5])
    ia, ib = kernels.match_greedy(a, b, 4.0, 5.0)
    np.testing.assert_array_equal(ia, [0, 1])
    np.testing.assert_array_equal(ib, [0, 1])


def test_hough_finds_line():
    rng = np.random.default_rng(6)
    x = rng.random(500) * 100.0
    diff = 50.0 + 0.4 * x
    ds = np.linspace(0, 1, 11)
    count, h, j = kernels.hough_peak(x, diff, ds, 0.0, 1.0, 200)
    assert count == 500 and abs(ds[h] - 0.4) < 1e-12 and j in (49, 50)


@pytest.mark.parametrize("row", ROWS)
def test_resolve_matches_exact_law(row):
    # Monte Carlo click-mask frequencies against the enumerated distribution
    m = 0.8
    pj, pa, pb = outcome_tables(m, PM, RL)
    exact = mask_distribution(row, m, pj, pa, pb)
    assert abs(sum(exact.values()) - 1) < 1e-12
    n = 100_000
    u = np.random.default_rng(sum(row)).random((n, kernels.N_UNIFORMS))
    masks, _ = kernels.resolve_pulses(np.tile(row, (n, 1)), u, m, pj, pa, pb)
    observed = np.bincount(masks, minlength=256)
    keys = sorted(exact)
    assert observed[[k for k in range(256) if k not in exact]].sum() == 0
    f_exp = np.array([exact[k] for k in keys]) * n
    f_obs = observed[keys]
    big = f_exp >= 5
    obs = np.append(f_obs[big], f_obs[~big].sum())
    exp = np.append(f_exp[big], f_exp[~big].sum())
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    assert sps.chisquare(obs, exp * obs.sum() / exp.sum()).pvalue > 1e-3


def test_pure_python_selectable():
    env = dict(os.environ, SWAPSIM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from swapsim import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
