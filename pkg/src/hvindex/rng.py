"""Reproducible random streams.

Everything random in the package is drawn from the raw 64-bit output of
numpy's PCG64 bit generator seeded through ``SeedSequence(seed)``.  Raw bit
generator output is stable across numpy releases and platforms, unlike the
higher-level ``Generator`` distribution methods, so persisted artifacts
(projection banks in particular) regenerate identically.

Stream version 1 conventions:

* sign draws: bit ``j`` of raw word ``w`` is draw ``64*w + j``; a set bit is +1.
* uniforms: ``(word >> 11) * 2**-53``, one word per draw.
"""

from __future__ import annotations

import numpy as np

STREAM_VERSION = 1


class Stream:
    """A seeded source of raw words, signs, bits and uniforms."""

    def __init__(self, seed: int):
        if not 0 <= seed < 1 << 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._bitgen = np.random.PCG64(seed)

    def words(self, n: int) -> np.ndarray:
        if n == 0:
            return np.zeros(0, dtype=np.uint64)
        return np.asarray(self._bitgen.random_raw(n), dtype=np.uint64)

    def bits(self, n: int) -> np.ndarray:
        """``n`` fair coin flips as a ``uint8`` 0/1 array."""
        raw = self.words((n + 63) // 64).astype("<u8").view(np.uint8)
        return np.unpackbits(raw, bitorder="little")[:n]

    def signs(self, shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape))
        return (self.bits(n).astype(np.int8) * 2 - 1).reshape(shape)

    def uniform(self, n: int) -> np.ndarray:
        return (self.words(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        """Standard normals by Box-Muller over :meth:`uniform` pairs."""
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)
        u2 = self.uniform(m)
        rad = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * m)
        out[0::2] = rad * np.cos(2 * np.pi * u2)
        out[1::2] = rad * np.sin(2 * np.pi * u2)
        return out[:n]
