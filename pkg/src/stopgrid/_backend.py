"""Backend selection: numba-compiled kernels by default, pure numpy on request.

The environment variable ``STOPGRID_BACKEND`` selects the default:

    STOPGRID_BACKEND=numba   use the JIT kernels (default when importable)
    STOPGRID_BACKEND=numpy   force the pure-numpy fallback

Functions taking a ``backend`` argument accept "numba", "numpy", or None
(= resolve from the environment).  Both backends implement identical
semantics; the benchmark suite under benchmarks/ compares their speed.
"""

from __future__ import annotations

import os
import warnings

from . import _kernels_numpy

_ENV_VAR = "STOPGRID_BACKEND"
_numba_module = None
_numba_error = None


def _load_numba():
    global _numba_module, _numba_error
    if _numba_module is None and _numba_error is None:
        try:
            from . import _kernels_numba
            _numba_module = _kernels_numba
        except ImportError as e:   # pragma: no cover - depends on environment
            _numba_error = e
    return _numba_module


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if _load_numba() is not None else ("numpy",)


def get_kernels(backend: str | None = None):
    """Resolve a backend name (or the environment default) to a kernel module."""
    name = backend or os.environ.get(_ENV_VAR, "").strip().lower() or None
    if name is None:
        mod = _load_numba()
        if mod is not None:
            return mod
        warnings.warn(f"numba unavailable ({_numba_error}); using numpy kernels")
        return _kernels_numpy
    if name == "numpy":
        return _kernels_numpy
    if name == "numba":
        mod = _load_numba()
        if mod is None:
            raise ImportError(f"numba backend requested but not importable: {_numba_error}")
        return mod
    raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")


def backend_name(backend: str | None = None) -> str:
    return "numpy" if get_kernels(backend) is _kernels_numpy else "numba"
