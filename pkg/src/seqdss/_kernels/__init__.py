"""Backend selection for the hot numeric kernels.

The jitted backend is used when numba imports cleanly.  Set SEQDSS_NUMBA=0
(or "false"/"no"/"off") to force the pure-NumPy path; set SEQDSS_NUMBA=1 to
require the jitted path (import errors then propagate).
"""

from __future__ import annotations

import importlib
import os

from . import numpy_backend

_FLAG = os.environ.get("SEQDSS_NUMBA", "auto").strip().lower()

numba_backend = None
if _FLAG not in ("0", "false", "no", "off"):
    try:
        numba_backend = importlib.import_module(".numba_backend", __name__)
    except ImportError:
        if _FLAG in ("1", "true", "yes", "on"):
            raise

backend = numba_backend if numba_backend is not None else numpy_backend

BACKEND_NAME = backend.NAME


def get_backend(name: str | None = None):
    """Return a backend module by name, or the active default."""
    if name is None:
        return backend
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        if numba_backend is None:
            raise RuntimeError("numba backend unavailable (disabled or not installed)")
        return numba_backend
    raise ValueError(f"unknown backend {name!r}")
