"""Backend selection for the hot kernels.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is used. Set ``TDELM_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os
from contextlib import contextmanager
from types import ModuleType

import numpy as np

from . import _fallback


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()


def get_backend(name: str) -> ModuleType:
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available; rebuild the package")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


if os.environ.get("TDELM_BACKEND", "").lower() == "python" or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

_impl = get_backend(BACKEND)


@contextmanager
def use_backend(name: str):
    """Temporarily route the wrappers below to another backend (not thread-safe)."""
    global _impl
    saved, _impl = _impl, get_backend(name)
    try:
        yield
    finally:
        _impl = saved


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), evaluated without overflow."""
    return _impl.sigmoid(x)


def hidden_activations(X, W, b) -> np.ndarray:
    """``sigmoid(X @ W.T + b)`` for X of shape (N, P), W (L, P), b (L,)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return _impl.hidden_activations(X, W, b)
