"""Kernel backend selection.

The compiled extension is preferred when importable; set
``RCTWEIGHTS_BACKEND=python`` or ``=c`` to force a choice (``auto`` default).
"""

import os

from . import _irls_py

try:
    from . import _irls as _irls_c
except ImportError:  # extension not built on this install
    _irls_c = None

_requested = os.environ.get("RCTWEIGHTS_BACKEND", "auto").lower()
if _requested == "python":
    _active = _irls_py
elif _requested == "c":
    if _irls_c is None:
        raise ImportError(
            "RCTWEIGHTS_BACKEND=c but the compiled kernel is not available"
        )
    _active = _irls_c
elif _requested == "auto":
    _active = _irls_c if _irls_c is not None else _irls_py
else:
    raise ValueError(f"unknown RCTWEIGHTS_BACKEND value: {_requested!r}")

irls_logistic = _active.irls_logistic

STATUS_OK = _irls_py.STATUS_OK
STATUS_MAX_ITER = _irls_py.STATUS_MAX_ITER
STATUS_RANK_DEFICIENT = _irls_py.STATUS_RANK_DEFICIENT


def backend_name():
    """Name of the kernel backend in use: ``"c"`` or ``"python"``."""
    return "c" if _active is _irls_c else "python"


def available_backends():
    names = ["python"]
    if _irls_c is not None:
        names.insert(0, "c")
    return names
