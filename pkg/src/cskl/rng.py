"""Counter-based random streams for reproducible sketching operators.

Projection vector ``i`` of an operator is drawn from its own Philox stream:
key = (seed, kind code), counter high word = i.  The draw for row ``i`` is
therefore independent of ``m``, of the order rows are generated in, and of
how the data stream is batched.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

KIND_CODES = {
    "dense-gaussian-tensor": 1,
    "rank-one-matrix": 2,
}


def philox_stream(seed: int, kind_code: int, index: int) -> np.random.Generator:
    """Generator for stream ``index`` under key ``(seed, kind_code)``."""
    if index < 0:
        raise ValueError("stream index must be non-negative")
    key = np.array([seed & _MASK64, kind_code & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def standard_normal_rows(seed: int, kind_code: int, m: int, width: int) -> np.ndarray:
    """Stack ``m`` rows of ``width`` standard normals, one stream per row."""
    out = np.empty((m, width))
    for i in range(m):
        out[i] = philox_stream(seed, kind_code, i).standard_normal(width)
    return out
