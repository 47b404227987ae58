"""Select the QP kernel backend at import time.

The compiled Cython kernel is preferred when present; the pure-numpy
fallback has identical semantics.  Set the environment variable
``UNITAVG_PURE=1`` to force the fallback (useful for benchmarking and
debugging).
"""

from __future__ import annotations

import os

from . import _qp_py as pure

compiled = None
if os.environ.get("UNITAVG_PURE", "") in ("", "0"):
    try:
        from . import _qp_kernel as compiled  # type: ignore[no-redef]
    except ImportError:
        compiled = None

default = compiled if compiled is not None else pure


def backend_name() -> str:
    """Name of the kernel in use: 'compiled' or 'pure'."""
    return "compiled" if default is compiled and compiled is not None else "pure"


def get_kernel(name: str | None = None):
    """Return a kernel module by name (None selects the default)."""
    if name is None:
        return default
    if name == "pure":
        return pure
    if name == "compiled":
        if compiled is None:
            raise RuntimeError("compiled kernel is not available")
        return compiled
    raise ValueError(f"unknown backend {name!r}; use 'pure' or 'compiled'")
