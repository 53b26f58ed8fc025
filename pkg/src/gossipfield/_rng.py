"""Deterministic random streams.

Everything stochastic in the package draws from numpy's Philox-4x64-10
counter-based generator, keyed directly by the user-supplied 64-bit seed.
Independent substreams (graph generation vs. placement, replica ensembles,
sample chunks) use the documented key-split

    key(seed, index) = (seed + (index + 1) * 2**64)  mod 2**128

so stream  ``index`` of a master seed is reproducible by any Philox
implementation without sharing generator state.
"""

from __future__ import annotations

import numpy as np

_KEY_SPACE = 1 << 128


def master_stream(seed) -> np.random.Generator:
    """Stream 0 for a master seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) % _KEY_SPACE))


def substream(seed, index) -> np.random.Generator:
    """Independent Philox stream ``index`` (>= 0) derived from ``seed``."""
    if index < 0:
        raise ValueError("substream index must be >= 0")
    key = (int(seed) + (int(index) + 1) * (1 << 64)) % _KEY_SPACE
    return np.random.Generator(np.random.Philox(key=key))
