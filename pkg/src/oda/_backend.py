"""Selects the kernel backend at import time.

The compiled extension is preferred; the NumPy twin is used when the
extension is absent or when ODA_DISABLE_EXT is set (useful for testing
and for the backend benchmark).
"""

import os

if os.environ.get("ODA_DISABLE_EXT"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as kernels  # type: ignore[no-redef]

BACKEND = kernels.BACKEND_NAME

__all__ = ["kernels", "BACKEND"]
