"""Reproducible random streams.

Philox-4x64 (counter-based, 10 rounds) keyed directly with ``(seed, stream)``.
The 256-bit counter starts at zero and is incremented before each block, so
block ``j`` encrypts counter ``j + 1``. Uniforms take the top 53 bits of each raw
64-bit word; normals use the cosine branch of Box-Muller. Only the raw
bit-generator output is taken from numpy, so numpy's distribution samplers
(which are allowed to change between releases) never enter the results.
"""

from __future__ import annotations

import numpy as np

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


class Stream:
    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative")
        key = np.array([seed, stream], dtype=np.uint64)
        self._bits = np.random.Philox(key=key)

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n)

    def uniform(self, shape) -> np.ndarray:
        """Uniform doubles in ``[0, 1)``."""
        n = int(np.prod(shape))
        return ((self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53).reshape(shape)

    def normal(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        u1 = 1.0 - self.uniform((n,))  # (0, 1]
        u2 = self.uniform((n,))
        return (np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)).reshape(shape)
