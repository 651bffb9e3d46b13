"""Kernel backend selection.

The compiled extension is preferred; the NumPy module is the fallback when
the extension is missing (source checkout without a build) or when the
environment variable ``TUMORSMC_PURE_PY`` is set to a non-empty value.
"""

import os

if os.environ.get("TUMORSMC_PURE_PY"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels

BACKEND_NAME = kernels.BACKEND_NAME


def backend() -> str:
    """Name of the active kernel implementation: 'cython' or 'python'."""
    return BACKEND_NAME
