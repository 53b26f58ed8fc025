"""Kernel backend selection.

The compiled extension is preferred when present; the pure-Python module is
a drop-in replacement producing bit-identical trajectories.  Set
``GOSSIPFIELD_BACKEND=pure`` to force the fallback, e.g. for benchmarking.
"""

import os

from . import pure

try:
    from . import _fast
except ImportError:
    _fast = None

if os.environ.get("GOSSIPFIELD_BACKEND") == "pure" or _fast is None:
    default = pure
else:
    default = _fast

BACKEND = default.BACKEND


def get_backend(name=None):
    """Resolve a backend module by name (None -> default)."""
    if name is None:
        return default
    if name == "pure":
        return pure
    if name == "compiled":
        if _fast is None:
            raise RuntimeError("compiled kernels are not available in this install")
        return _fast
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    return ("pure",) if _fast is None else ("pure", "compiled")
