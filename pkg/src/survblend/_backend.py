"""Kernel backend selection.

The compiled core is used when it imports; ``SURVBLEND_BACKEND=python`` forces
the pure-Python fallback (useful for debugging and parity tests).
"""
import importlib
import os
import warnings

_FORCED = os.environ.get("SURVBLEND_BACKEND", "").strip().lower()


def _load():
    if _FORCED == "python":
        return importlib.import_module("survblend._pykernels")
    try:
        return importlib.import_module("survblend._ckernels")
    except ImportError:
        if _FORCED in ("compiled", "cython"):
            raise
        warnings.warn("compiled kernels unavailable; using the pure-Python fallback",
                      RuntimeWarning, stacklevel=2)
        return importlib.import_module("survblend._pykernels")


kernels = _load()
BACKEND = kernels.BACKEND


def get_kernels(name=None):
    """Return a kernel module by name (``"python"`` or ``"compiled"``), default the active one."""
    if name is None:
        return kernels
    if name == "python":
        return importlib.import_module("survblend._pykernels")
    if name in ("compiled", "cython"):
        return importlib.import_module("survblend._ckernels")
    raise ValueError(f"unknown backend {name!r}")
