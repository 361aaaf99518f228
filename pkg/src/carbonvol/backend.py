"""Kernel backend selection: compiled extension if available, numpy otherwise.

Set ``CARBONVOL_BACKEND=numpy`` (or ``cython``) to force a choice; the
default ``auto`` prefers the compiled kernels.  ``get_kernels`` exposes both
for the parity tests and the benchmark.
"""

import os
import warnings

from . import _kernels_np

_FUNCTIONS = ("euler_intraday", "euler_terminal", "local_variance_day", "tmpv_day")


def _load_compiled():
    try:
        from . import _core
        return _core
    except ImportError:
        return None


def get_kernels(name):
    """Return the kernel module for ``name`` in {'numpy', 'cython'}."""
    if name == "numpy":
        return _kernels_np
    if name == "cython":
        mod = _load_compiled()
        if mod is None:
            raise ImportError("compiled kernels not available; "
                              "build with `pip install -e . --no-build-isolation`")
        return mod
    raise ValueError(f"unknown backend {name!r}")


def _select():
    choice = os.environ.get("CARBONVOL_BACKEND", "auto").lower()
    if choice == "numpy":
        return _kernels_np, "numpy"
    if choice == "cython":
        return get_kernels("cython"), "cython"
    if choice != "auto":
        raise ValueError(f"CARBONVOL_BACKEND must be auto/numpy/cython, got {choice!r}")
    mod = _load_compiled()
    if mod is None:
        warnings.warn("carbonvol: compiled kernels unavailable, using the "
                      "(slower) numpy backend", RuntimeWarning, stacklevel=2)
        return _kernels_np, "numpy"
    return mod, "cython"


kernels, BACKEND = _select()

__all__ = ["kernels", "BACKEND", "get_kernels"]
