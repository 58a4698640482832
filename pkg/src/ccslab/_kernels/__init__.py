"""Kernel backend selection.

The compiled chain kernel is preferred when its extension module imports
cleanly; otherwise the NumPy reference implementation takes over.  Set the
environment variable ``CCSLAB_PURE_PYTHON=1`` before import to force the
fallback (the benchmark suite uses this to compare both).
"""

from __future__ import annotations

import os

from . import _ref

BACKEND = "python"
run_mixture_chain = _ref.run_mixture_chain

if not os.environ.get("CCSLAB_PURE_PYTHON"):
    try:
        from . import _chainkern

        BACKEND = "compiled"
        run_mixture_chain = _chainkern.run_mixture_chain
    except ImportError:
        pass

__all__ = ["BACKEND", "run_mixture_chain"]
