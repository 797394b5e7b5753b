"""Backend dispatch for the hot numeric kernels.

Two interchangeable implementations exist: ``_numba`` (jitted loops, the
default when numba is importable) and ``_numpy`` (pure numpy fallback).
Selection: the ``SPIXEL_BACKEND`` environment variable (``numba`` or
``numpy``) wins at import time; ``set_backend()`` switches at runtime.
``benchmarks/bench_kernels.py`` compares the two.
"""

import os
import warnings

from . import _numpy

_IMPLS = {"numpy": _numpy}

try:
    from . import _numba

    _IMPLS["numba"] = _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None


def _initial_backend():
    name = os.environ.get("SPIXEL_BACKEND", "").strip().lower()
    if name:
        if name not in ("numpy", "numba"):
            raise ValueError(f"SPIXEL_BACKEND must be 'numpy' or 'numba', got {name!r}")
        if name == "numba" and "numba" not in _IMPLS:
            warnings.warn("SPIXEL_BACKEND=numba but numba is unavailable; using numpy")
            return "numpy"
        return name
    return "numba" if "numba" in _IMPLS else "numpy"


_backend_name = _initial_backend()
_active = _IMPLS[_backend_name]


def backend_name():
    return _backend_name


def available_backends():
    return sorted(_IMPLS)


def set_backend(name):
    """Switch the active kernel backend ('numpy' or 'numba')."""
    global _backend_name, _active
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _backend_name = name
    _active = _IMPLS[name]


def conv2d_fwd(x, w, b, stride, pad):
    return _active.conv2d_fwd(x, w, b, stride, pad)


def conv2d_bwd(dy, x, w, stride, pad, need_dx, need_dw):
    return _active.conv2d_bwd(dy, x, w, stride, pad, need_dx, need_dw)


def convt2x2_fwd(x, w):
    return _active.convt2x2_fwd(x, w)


def convt2x2_bwd(dy, x, w, need_dx, need_dw):
    return _active.convt2x2_bwd(dy, x, w, need_dx, need_dw)


def maxpool2_fwd(x):
    return _active.maxpool2_fwd(x)


def maxpool2_bwd(dy, idx):
    return _active.maxpool2_bwd(dy, idx)


def aggregate_fwd(q, l, nbr, ncell):
    return _active.aggregate_fwd(q, l, nbr, ncell)


def aggregate_bwd(dnum, dden, q, l, nbr):
    return _active.aggregate_bwd(dnum, dden, q, l, nbr)


def reconstruct_fwd(q, hs, nbr):
    return _active.reconstruct_fwd(q, hs, nbr)


def reconstruct_bwd(g, q, hs, nbr, ncell):
    return _active.reconstruct_bwd(g, q, hs, nbr, ncell)


def implant_fuse_fwd(e, mhat, w, b, nbr, pnbr, variant):
    return _active.implant_fuse_fwd(e, mhat, w, b, nbr, pnbr, variant)


def implant_fuse_bwd(dy, e, mhat, w, nbr, pnbr, variant):
    return _active.implant_fuse_bwd(dy, e, mhat, w, nbr, pnbr, variant)


VARIANT_STANDARD = _numpy.VARIANT_STANDARD
VARIANT_PNBOR = _numpy.VARIANT_PNBOR
VARIANT_CPIX = _numpy.VARIANT_CPIX
