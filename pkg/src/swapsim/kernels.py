"""Kernel selection: compiled extension when built, pure Python otherwise.

Set ``SWAPSIM_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels
from ._pykernels import (  # noqa: F401
    BIT_A, BIT_B, BIT_C, BIT_D, BIT_E, BIT_F, BIT_G, BIT_H,
    CAT_BUNCHED, CAT_NONE, CAT_PSI_MINUS, CAT_PSI_PLUS, CAT_SPLIT, N_UNIFORMS,
)

_compiled = None
if os.environ.get("SWAPSIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _pykernels


def get_backend(name=None):
    """Kernel module by name (``"cython"`` / ``"python"``); default is the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def resolve_pulses(cls, u, m, pj, pa_plus, pb_plus):
    return _impl.resolve_pulses(
        np.ascontiguousarray(cls, dtype=np.int64),
        np.ascontiguousarray(u, dtype=np.float64),
        float(m),
        np.ascontiguousarray(pj, dtype=np.float64),
        np.ascontiguousarray(pa_plus, dtype=np.float64),
        np.ascontiguousarray(pb_plus, dtype=np.float64),
    )


def pair_bsm(tags, chans, window):
    return _impl.pair_bsm(
        np.ascontiguousarray(tags, dtype=np.int64), np.ascontiguousarray(chans, dtype=np.uint8), int(window)
    )


def match_greedy(ta, tb, lo, hi):
    return _impl.match_greedy(
        np.ascontiguousarray(ta, dtype=np.float64), np.ascontiguousarray(tb, dtype=np.float64), float(lo), float(hi)
    )


def pair_diffs(t_local, t_remote, lo, hi):
    return _impl.pair_diffs(
        np.ascontiguousarray(t_local, dtype=np.float64),
        np.ascontiguousarray(t_remote, dtype=np.float64),
        float(lo),
        float(hi),
    )


def hough_peak(x, diff, ds, o_lo, w, nb):
    return _impl.hough_peak(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(diff, dtype=np.float64),
        np.ascontiguousarray(ds, dtype=np.float64),
        float(o_lo),
        float(w),
        int(nb),
    )
