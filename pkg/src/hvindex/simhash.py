"""Signed random projections (SimHash) from real feature vectors to binary codes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hvindex.bitcode import BitCode, CodeSet, hamming
from hvindex.errors import DimensionError, DomainError
from hvindex.rng import Stream

DEFAULT_BITS = 512


@dataclass(frozen=True)
class ProjectionBank:
    """``output_bits`` Rademacher projection rows over ``input_dim`` inputs.

    The matrix is a pure function of ``(input_dim, output_bits, seed)``; only
    those three numbers are persisted.
    """

    input_dim: int
    output_bits: int = DEFAULT_BITS
    seed: int = 0
    matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.input_dim < 1:
            raise DomainError(f"input_dim must be positive, got {self.input_dim}")
        if not 1 <= self.output_bits <= 4096:
            raise DomainError(f"output_bits must lie in 1..4096, got {self.output_bits}")
        rows = Stream(self.seed).signs((self.output_bits, self.input_dim))
        rows.setflags(write=False)
        object.__setattr__(self, "matrix", rows)

    def project(self, x: np.ndarray) -> np.ndarray:
        """Inner products with every row; ``x`` is ``(n,)`` or ``(N, n)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise DimensionError(f"expected dimension {self.input_dim}, got {x.shape[-1]}")
        if not np.all(np.isfinite(x)):
            raise DomainError("feature values must be finite")
        return x @ self.matrix.T.astype(np.float64)


def _pack_rows(bits: np.ndarray) -> list[int]:
    packed = np.packbits(bits.astype(np.uint8), axis=-1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def binarize(bank: ProjectionBank, v) -> BitCode:
    """Bit ``i`` is 1 iff ``<v, row_i> >= 0``."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError("binarize takes a single vector; use binarize_batch for matrices")
    (value,) = _pack_rows(bank.project(v)[None, :] >= 0)
    return BitCode(bank.output_bits, value)


def binarize_batch(bank: ProjectionBank, x, labels=None) -> CodeSet:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    values = _pack_rows(bank.project(x) >= 0) if len(x) else []
    codes = [BitCode(bank.output_bits, v) for v in values]
    if labels is None:
        labels = [0] * len(codes)
    return CodeSet(bank.output_bits, codes, [int(l) for l in labels])


def soft_binarize(bank: ProjectionBank, v, scale: float = 1.0) -> np.ndarray:
    """tanh-relaxed codes in (-1, 1), the continuous stand-in used for balance losses."""
    return np.tanh(scale * bank.project(v))


def estimate_cosine(a: BitCode, b: BitCode) -> float:
    """Cosine of the angle implied by the Hamming distance between two sketches."""
    return math.cos(math.pi * hamming(a, b) / a.width)


def collision_probability(theta: float) -> float:
    """Per-bit agreement probability for vectors at angle ``theta`` (radians)."""
    if not 0.0 <= theta <= math.pi:
        raise DomainError(f"theta must lie in [0, pi], got {theta}")
    return 1.0 - theta / math.pi
