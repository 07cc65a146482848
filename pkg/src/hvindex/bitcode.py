"""Fixed-width binary codes, Hamming arithmetic and Hamming-ball enumeration.

A code of width ``k`` is stored as a non-negative Python ``int`` whose bit
``j`` is code bit ``j``.  Viewed as packed 64-bit words this is the
little-endian layout used on disk: bit ``j`` of word ``w`` holds code bit
``64*w + j``.  Python integers give exact xor/popcount on any width, and the
numpy word matrix of a :class:`CodeSet` serves the vectorized scans.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Iterable, Iterator, Sequence

import numpy as np

from hvindex.errors import ConfigurationError, DimensionError, DomainError

MAX_WIDTH = 4096
WORD_BITS = 64

_MASK_CACHE_LIMIT = 1 << 16


@dataclass(frozen=True, slots=True)
class BitCode:
    """An immutable ``width``-bit binary code."""

    width: int
    value: int = 0

    def __post_init__(self):
        if not 1 <= self.width <= MAX_WIDTH:
            raise DomainError(f"code width must lie in 1..{MAX_WIDTH}, got {self.width}")
        if self.value < 0 or self.value >> self.width:
            raise DomainError(f"value does not fit in {self.width} bits")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> BitCode:
        """Build a code from a sequence of 0/1 values, bit 0 first."""
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits, dtype=np.uint8)
        if arr.ndim != 1 or arr.size == 0:
            raise DomainError("expected a non-empty 1-D bit sequence")
        if np.any(arr > 1):
            raise DomainError("bits must be 0 or 1")
        packed = np.packbits(arr, bitorder="little")
        return cls(int(arr.size), int.from_bytes(packed.tobytes(), "little"))

    @classmethod
    def from_bytes(cls, data: bytes, width: int) -> BitCode:
        """Decode ``ceil(width/8)`` little-endian bytes."""
        if len(data) != (width + 7) // 8:
            raise DomainError(f"{width}-bit code needs {(width + 7) // 8} bytes, got {len(data)}")
        return cls(width, int.from_bytes(data, "little"))

    @classmethod
    def from_words(cls, words: Sequence[int], width: int) -> BitCode:
        value = 0
        for w, word in enumerate(words):
            value |= int(word) << (WORD_BITS * w)
        return cls(width, value)

    @classmethod
    def zeros(cls, width: int) -> BitCode:
        return cls(width, 0)

    @classmethod
    def ones(cls, width: int) -> BitCode:
        return cls(width, (1 << width) - 1)

    @property
    def n_words(self) -> int:
        return (self.width + WORD_BITS - 1) // WORD_BITS

    @property
    def words(self) -> tuple[int, ...]:
        mask = (1 << WORD_BITS) - 1
        return tuple((self.value >> (WORD_BITS * w)) & mask for w in range(self.n_words))

    def to_bytes(self) -> bytes:
        return self.value.to_bytes((self.width + 7) // 8, "little")

    def bits(self) -> np.ndarray:
        """Unpacked bits as a ``uint8`` array, bit 0 first."""
        raw = np.frombuffer(self.to_bytes(), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[: self.width]

    def popcount(self) -> int:
        return self.value.bit_count()

    def complement(self) -> BitCode:
        return BitCode(self.width, self.value ^ ((1 << self.width) - 1))

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.bits())


@dataclass(frozen=True, slots=True)
class Substring:
    """The ``index``-th contiguous ``width``-bit slice of a code."""

    value: int
    index: int
    width: int

    def __post_init__(self):
        if self.value < 0 or self.value >> self.width:
            raise DomainError(f"substring value does not fit in {self.width} bits")
        if self.index < 0:
            raise DomainError("substring index must be non-negative")


def hamming(a: BitCode, b: BitCode) -> int:
    """Number of positions where ``a`` and ``b`` differ."""
    if a.width != b.width:
        raise DimensionError(f"width mismatch: {a.width} vs {b.width}")
    return (a.value ^ b.value).bit_count()


def substring_width(width: int, t: int) -> int:
    """Bits per substring when a ``width``-bit code is cut into ``t`` pieces."""
    if t < 1:
        raise ConfigurationError(f"substring count must be >= 1, got {t}")
    if width % t:
        raise ConfigurationError(f"{t} substrings do not divide a {width}-bit code")
    return width // t


def substring_at(c: BitCode, m: int, t: int) -> Substring:
    """Bits ``[m*s, (m+1)*s)`` of ``c`` with ``s = width/t``."""
    s = substring_width(c.width, t)
    if not 0 <= m < t:
        raise DomainError(f"table index {m} outside 0..{t - 1}")
    return Substring((c.value >> (m * s)) & ((1 << s) - 1), m, s)


def split_value(value: int, t: int, s: int) -> list[int]:
    """All ``t`` substring keys of a raw code value (no validation)."""
    mask = (1 << s) - 1
    return [(value >> (m * s)) & mask for m in range(t)]


def join_substrings(parts: Sequence[Substring]) -> BitCode:
    """Inverse of :func:`substring_at` over all tables, in index order."""
    if not parts:
        raise DomainError("no substrings to join")
    s = parts[0].width
    value = 0
    for m, part in enumerate(sorted(parts, key=lambda p: p.index)):
        if part.index != m or part.width != s:
            raise DomainError("substrings must cover indices 0..t-1 with equal widths")
        value |= part.value << (m * s)
    return BitCode(s * len(parts), value)


def ball_size(s: int, radius: int) -> int:
    """Number of ``s``-bit values within Hamming distance ``radius`` of a point."""
    return sum(comb(s, d) for d in range(min(radius, s) + 1))


@lru_cache(maxsize=256)
def _masks_cached(s: int, d: int) -> tuple[int, ...]:
    return tuple(_iter_masks(s, d))


def _iter_masks(s: int, d: int) -> Iterator[int]:
    for positions in itertools.combinations(range(s), d):
        mask = 0
        for p in positions:
            mask |= 1 << p
        yield mask


def flip_masks(s: int, d: int) -> Iterable[int]:
    """Every ``s``-bit mask with exactly ``d`` set bits, in lexicographic position order."""
    if comb(s, d) <= _MASK_CACHE_LIMIT:
        return _masks_cached(s, d)
    return _iter_masks(s, d)


def enumerate_ball(center: Substring | int, radius: int, s: int | None = None) -> Iterator[int]:
    """Yield every ``s``-bit value within ``radius`` of ``center``.

    Values come out in non-decreasing distance order, each exactly once.
    ``s`` is taken from ``center`` when it is a :class:`Substring`.
    """
    if isinstance(center, Substring):
        value, s = center.value, center.width
    else:
        if s is None:
            raise DomainError("substring width s is required for a raw center value")
        value = center
        if value < 0 or value >> s:
            raise DomainError(f"center does not fit in {s} bits")
    if radius < 0 or radius > s:
        raise DomainError(f"radius {radius} outside 0..{s}")
    for d in range(radius + 1):
        for mask in flip_masks(s, d):
            yield value ^ mask


@dataclass
class CodeSet:
    """An ordered collection of equal-width codes with per-code class labels."""

    width: int
    codes: list[BitCode] = field(default_factory=list)
    labels: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= self.width <= MAX_WIDTH:
            raise DomainError(f"code width must lie in 1..{MAX_WIDTH}, got {self.width}")
        if len(self.labels) != len(self.codes):
            raise DimensionError("labels and codes must have the same length")
        for c in self.codes:
            if c.width != self.width:
                raise DimensionError(f"code of width {c.width} in a {self.width}-bit set")
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.codes)

    def __iter__(self) -> Iterator[BitCode]:
        return iter(self.codes)

    def __getitem__(self, i: int) -> BitCode:
        return self.codes[i]

    def append(self, code: BitCode, label: int = 0) -> int:
        if code.width != self.width:
            raise DimensionError(f"code of width {code.width} in a {self.width}-bit set")
        self.codes.append(code)
        self.labels.append(int(label))
        self._matrix = None
        return len(self.codes) - 1

    def subset(self, ids: Sequence[int]) -> CodeSet:
        return CodeSet(self.width, [self.codes[i] for i in ids], [self.labels[i] for i in ids])

    @property
    def values(self) -> list[int]:
        return [c.value for c in self.codes]

    @property
    def matrix(self) -> np.ndarray:
        """Codes as an ``(N, n_words)`` ``uint64`` array (cached)."""
        if self._matrix is None or self._matrix.shape[0] != len(self.codes):
            self._matrix = codes_to_words(self.codes, self.width)
        return self._matrix

    def __eq__(self, other) -> bool:
        if not isinstance(other, CodeSet):
            return NotImplemented
        return self.width == other.width and self.codes == other.codes and self.labels == other.labels


def codes_to_words(codes: Sequence[BitCode], width: int) -> np.ndarray:
    n_words = (width + WORD_BITS - 1) // WORD_BITS
    buf = b"".join(c.value.to_bytes(8 * n_words, "little") for c in codes)
    return np.frombuffer(buf, dtype="<u8").reshape(len(codes), n_words).astype(np.uint64)


def hamming_to_many(matrix: np.ndarray, q: BitCode) -> np.ndarray:
    """Distances from ``q`` to every row of a packed word matrix."""
    qw = np.array(q.words, dtype=np.uint64)
    if matrix.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if matrix.shape[1] != qw.size:
        raise DimensionError("query word count does not match the code matrix")
    return np.bitwise_count(matrix ^ qw).sum(axis=1, dtype=np.int64)
