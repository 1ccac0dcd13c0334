"""Kernel backend selection.

The hot loops (simplex pivoting, constraint column assembly, dual pricing)
exist twice: numba-jitted and pure numpy. The active implementation is chosen
by the MRCCG_BACKEND environment variable, value "numba" or "numpy". When the
variable is unset the numba backend is used if numba imports, otherwise the
numpy fallback. `benchmarks/backend_bench.py` compares the two.
"""

import os

from mrccg import _kernels_numpy

try:
    from mrccg import _kernels_numba
except ImportError:
    _kernels_numba = None

ENV_VAR = "MRCCG_BACKEND"

HAS_NUMBA = _kernels_numba is not None


def available_backends():
    return ["numba", "numpy"] if HAS_NUMBA else ["numpy"]


def active_backend():
    """Backend name currently in effect, honoring MRCCG_BACKEND."""
    choice = os.environ.get(ENV_VAR, "").strip().lower()
    if choice == "":
        return "numba" if HAS_NUMBA else "numpy"
    if choice not in ("numba", "numpy"):
        raise ValueError(
            f"unknown {ENV_VAR} value {choice!r}, expected 'numba' or 'numpy'")
    if choice == "numba" and not HAS_NUMBA:
        raise RuntimeError(
            f"{ENV_VAR}=numba requested but numba is not importable")
    return choice


def get_kernels(name=None):
    """Return the kernel module for `name`, or for the active backend."""
    if name is None:
        name = active_backend()
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        return _kernels_numba
    if name == "numpy":
        return _kernels_numpy
    raise ValueError(f"unknown backend {name!r}")
