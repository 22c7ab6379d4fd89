"""Kernel backend selection: compiled extension if importable, numpy otherwise.

``MANIKIN_BACKEND=python`` forces the numpy fallback; ``=compiled`` insists on
the extension and raises if it was not built. :func:`use` switches at runtime
(used by the benchmark and the cross-backend tests).
"""

from __future__ import annotations

import os

from manikin import _kernels_py

_BACKENDS = {"python": _kernels_py}

try:
    from manikin import _kernels  # type: ignore[attr-defined]

    _BACKENDS["compiled"] = _kernels
except ImportError:
    _kernels = None

_active = None


def available() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def use(name: str):
    """Select a backend by name; returns the kernel module."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available()}")
    _active = _BACKENDS[name]
    return _active


def kernels():
    """The active kernel module."""
    global _active
    if _active is None:
        forced = os.environ.get("MANIKIN_BACKEND")
        if forced:
            use(forced)
        else:
            _active = _BACKENDS.get("compiled", _kernels_py)
    return _active


def active_name() -> str:
    mod = kernels()
    return "compiled" if mod.COMPILED else "python"
