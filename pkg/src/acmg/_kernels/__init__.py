"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``ACMG_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _fallback as fallback

compiled = None
if not os.environ.get("ACMG_PURE_PYTHON"):
    try:
        from . import _core as compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled = None

BACKEND = "compiled" if compiled is not None else "python"
active = compiled if compiled is not None else fallback


def phase1_float(T, basis, tol, max_iter):
    """Run phase-1 pivots on a float64 C-contiguous tableau in place."""
    if compiled is not None:
        return compiled.phase1(T, basis, tol, max_iter)
    rows = T.tolist()
    bas = basis.tolist()
    it = fallback.phase1(rows, bas, tol, max_iter)
    T[:, :] = rows
    basis[:] = bas
    return it


def rollouts(*args, backend=None):
    mod = {"compiled": compiled, "python": fallback, None: active}[backend]
    if mod is None:
        raise RuntimeError("compiled kernels are not available")
    return mod.rollouts(*args)
