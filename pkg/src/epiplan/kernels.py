"""Kernel backend selection.

The compiled extension is preferred; the NumPy fallback is selected when
the extension is missing or when EPIPLAN_PURE_PYTHON=1 is set.  Both
expose the same ``transition_cols`` contract and produce bit-identical
output, so selection never changes results, only speed.
"""

import os

from epiplan import _kernels_py

if os.environ.get("EPIPLAN_PURE_PYTHON", "") == "1":
    _impl = _kernels_py
else:
    try:
        from epiplan import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

transition_cols = _impl.transition_cols


def backend_name() -> str:
    """Name of the active kernel backend ("compiled" or "python")."""
    return _impl.BACKEND
