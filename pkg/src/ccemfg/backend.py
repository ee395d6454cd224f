"""Kernel backend selection.

The hot kernels (counter-RNG normal draws and Brownian-bridge path
construction) exist twice: a Cython extension and a pure-numpy fallback.
The extension is preferred when importable; ``CCEMFG_BACKEND`` overrides
(``cython``, ``python`` or ``auto``).  Both backends implement the same
algorithms with the same draw layout and agree to ~1e-13 per draw (libm
vs numpy log may differ in the last ulp).
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

from . import _pathgen_py

try:
    from . import _pathgen_cy
except ImportError:  # pragma: no cover - depends on build environment
    _pathgen_cy = None

_requested = os.environ.get("CCEMFG_BACKEND", "auto").lower()
if _requested not in ("auto", "cython", "python"):
    raise RuntimeError(f"CCEMFG_BACKEND must be auto, cython or python, "
                       f"got {_requested!r}")
if _requested == "cython" and _pathgen_cy is None:
    raise RuntimeError("CCEMFG_BACKEND=cython but the extension is not built")

_active = "python" if (_requested == "python" or _pathgen_cy is None) else "cython"


def active_backend() -> str:
    return _active


def available_backends() -> tuple[str, ...]:
    return ("python",) if _pathgen_cy is None else ("cython", "python")


@contextmanager
def use_backend(name: str):
    """Temporarily force a backend (tests and benchmarks)."""
    global _active
    if name not in available_backends():
        raise ValueError(f"backend {name!r} not available")
    prev, _active = _active, name
    try:
        yield
    finally:
        _active = prev


def norm_quantile(p: np.ndarray) -> np.ndarray:
    if _active == "cython":
        return _pathgen_cy.norm_quantile(p)
    return _pathgen_py.norm_quantile(p)


def brownian_paths(keys: np.ndarray, steps: int, horizon: float) -> np.ndarray:
    """Brownian paths on the uniform grid, shape ``keys.shape + (steps+1,)``."""
    keys = np.asarray(keys, dtype=np.uint64)
    if _active == "cython":
        lo, mid, hi, frac, sd = _pathgen_py.bridge_plan(steps, horizon / steps)
        flat = np.ascontiguousarray(keys.ravel())
        w = _pathgen_cy.brownian_paths_plan(flat, steps, horizon,
                                            lo, mid, hi, frac, sd)
        return w.reshape(keys.shape + (steps + 1,))
    return _pathgen_py.brownian_paths(keys, steps, horizon)
