"""Kernel selection: the compiled extension when importable, numpy otherwise.

Set ``CASEPRIVACY_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        return None
    return _kernels


compiled = _load_compiled()

if compiled is not None and not os.environ.get("CASEPRIVACY_PURE_PYTHON"):
    BACKEND = "cython"
    group_first_seen = compiled.group_first_seen
    count_distinct = compiled.count_distinct
else:
    BACKEND = "python"
    group_first_seen = _kernels_py.group_first_seen
    count_distinct = _kernels_py.count_distinct


def backends() -> dict[str, ModuleType]:
    """Every available kernel implementation, keyed by name."""
    out: dict[str, ModuleType] = {"python": _kernels_py}
    if compiled is not None:
        out["cython"] = compiled
    return out
