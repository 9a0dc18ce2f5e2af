"""Hot per-pixel scoring kernels, with backend selection at import time.

The compiled Cython extension is preferred when importable; otherwise the
numpy implementations in :mod:`crosstask._kernels.pykernels` are used.
Both expose identical functions and semantics.

Selection can be forced with the environment variable
``CROSSTASK_KERNELS=python|compiled`` (before first import) or at runtime
via :func:`set_backend` (used by the benchmark and the parity tests).
"""
from __future__ import annotations

import os

from . import pykernels

_BACKENDS = {"python": pykernels}

try:
    from . import _cykernels  # type: ignore[attr-defined]

    _BACKENDS["compiled"] = _cykernels
except ImportError:  # extension not built; numpy fallback stays active
    _cykernels = None

_KERNEL_NAMES = ("count_equal_where", "count_member_where", "sym_kl_sum_where")

BACKEND = ""


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str):
    """Return the backend module itself (for side-by-side benchmarking)."""
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")


def set_backend(name: str) -> None:
    """Rebind the module-level kernel functions to the named backend."""
    module = get_backend(name)
    g = globals()
    for fn in _KERNEL_NAMES:
        g[fn] = getattr(module, fn)
    g["BACKEND"] = name


_requested = os.environ.get("CROSSTASK_KERNELS")
if _requested:
    set_backend(_requested)
else:
    set_backend("compiled" if "compiled" in _BACKENDS else "python")
