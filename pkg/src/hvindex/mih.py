"""Multi-index hashing for exact Hamming r-neighbor search.

Every enrolled code is cut into ``t`` disjoint ``s``-bit substrings and its id
is filed under each substring in the matching table.  A query within
Hamming radius ``r`` must agree with any true neighbor to within
``floor(r/t)`` on at least one substring (pigeonhole), so probing each table
at that radius and verifying the union of hits on full codes is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hvindex.bitcode import (
    BitCode,
    CodeSet,
    ball_size,
    enumerate_ball,
    hamming,
    split_value,
    substring_width,
)
from hvindex.errors import DimensionError, DomainError

# Enumerate the Hamming ball while it is small next to the table; past that,
# scanning the table's distinct keys is cheaper and yields the same buckets.
_ENUMERATE_MIN = 64
_SCAN_RATIO = 16


@dataclass
class QueryStats:
    candidates_examined: int = 0
    full_verifications: int = 0
    tables_probed: int = 0
    true_neighbors: int = 0


class MihIndex:
    """``t`` substring hash tables over an append-only code store."""

    def __init__(self, width: int, t: int):
        self.width = width
        self.t = t
        self.s = substring_width(width, t)
        self.tables: list[dict[int, list[int]]] = [{} for _ in range(t)]
        self.store: list[BitCode] = []
        self.labels: list[int] = []
        self._values: list[int] = []
        self._scan_cache: list[tuple[np.ndarray, list[list[int]]] | None] = [None] * t

    @classmethod
    def build(cls, codes: CodeSet, t: int) -> MihIndex:
        ix = cls(codes.width, t)
        for code, label in zip(codes.codes, codes.labels):
            ix.insert(code, label)
        return ix

    @property
    def size(self) -> int:
        return len(self.store)

    def __len__(self) -> int:
        return len(self.store)

    def codeset(self) -> CodeSet:
        return CodeSet(self.width, list(self.store), list(self.labels))

    def insert(self, code: BitCode, label: int = 0) -> int:
        """Enroll ``code`` and return its id (ids are consecutive from 0)."""
        if code.width != self.width:
            raise DimensionError(f"code width {code.width} does not match index width {self.width}")
        idx = len(self.store)
        self.store.append(code)
        self.labels.append(int(label))
        self._values.append(code.value)
        for m, key in enumerate(split_value(code.value, self.t, self.s)):
            self.tables[m].setdefault(key, []).append(idx)
        self._scan_cache = [None] * self.t
        return idx

    def _scan_arrays(self, m: int) -> tuple[np.ndarray, list[list[int]]]:
        cached = self._scan_cache[m]
        if cached is None:
            table = self.tables[m]
            keys = np.fromiter(table.keys(), dtype=np.uint64, count=len(table))
            cached = (keys, list(table.values()))
            self._scan_cache[m] = cached
        return cached

    def probe(self, m: int, key: int, radius: int) -> list[list[int]]:
        """Buckets of table ``m`` whose key lies within ``radius`` of ``key``."""
        table = self.tables[m]
        if not table:
            return []
        radius = min(radius, self.s)
        if ball_size(self.s, radius) <= max(_ENUMERATE_MIN, len(table) // _SCAN_RATIO):
            return [table[v] for v in enumerate_ball(key, radius, self.s) if v in table]
        if self.s > 64:
            return [ids for k, ids in table.items() if (k ^ key).bit_count() <= radius]
        keys, buckets = self._scan_arrays(m)
        hits = np.flatnonzero(np.bitwise_count(keys ^ np.uint64(key)) <= radius)
        return [buckets[i] for i in hits]

    def _check_query(self, q: BitCode, r: int) -> None:
        if q.width != self.width:
            raise DimensionError(f"query width {q.width} does not match index width {self.width}")
        if not 0 <= r <= self.width:
            raise DomainError(f"radius {r} outside 0..{self.width}")

    def query_rneighbors(self, q: BitCode, r: int) -> tuple[set[int], QueryStats]:
        """Exactly the ids within Hamming distance ``r`` of ``q``."""
        self._check_query(q, r)
        stats = QueryStats()
        radius = r // self.t
        seen: set[int] = set()
        found: set[int] = set()
        values = self._values
        qv = q.value
        for m, key in enumerate(split_value(qv, self.t, self.s)):
            stats.tables_probed += 1
            for bucket in self.probe(m, key, radius):
                stats.candidates_examined += len(bucket)
                for idx in bucket:
                    if idx in seen:
                        continue
                    seen.add(idx)
                    if (values[idx] ^ qv).bit_count() <= r:
                        found.add(idx)
        stats.full_verifications = len(seen)
        stats.true_neighbors = len(found)
        return found, stats

    def search_optimized(self, q: BitCode, r: int) -> tuple[dict[int, int], QueryStats]:
        """Table-by-table search that stops at the first table yielding a true neighbor.

        Returns every verified neighbor met up to and including that table,
        mapped to its full Hamming distance.
        """
        self._check_query(q, r)
        stats = QueryStats()
        radius = r // self.t
        seen: set[int] = set()
        found: dict[int, int] = {}
        values = self._values
        qv = q.value
        for m, key in enumerate(split_value(qv, self.t, self.s)):
            stats.tables_probed += 1
            for bucket in self.probe(m, key, radius):
                stats.candidates_examined += len(bucket)
                for idx in bucket:
                    if idx in seen:
                        continue
                    seen.add(idx)
                    d = (values[idx] ^ qv).bit_count()
                    if d <= r:
                        found[idx] = d
            if found:
                break
        stats.full_verifications = len(seen)
        stats.true_neighbors = len(found)
        return found, stats

    def query_optimized(self, q: BitCode, r: int) -> tuple[int | None, QueryStats]:
        """Closest verified neighbor of the first table that yields one, or ``None``."""
        found, stats = self.search_optimized(q, r)
        if not found:
            return None, stats
        best = min(found.items(), key=lambda item: (item[1], item[0]))[0]
        return best, stats


def build(codes: CodeSet, t: int) -> MihIndex:
    return MihIndex.build(codes, t)


def query_rneighbors(ix: MihIndex, q: BitCode, r: int) -> tuple[set[int], QueryStats]:
    return ix.query_rneighbors(q, r)


def query_optimized(ix: MihIndex, q: BitCode, r: int) -> tuple[int | None, QueryStats]:
    return ix.query_optimized(q, r)


def insert(ix: MihIndex, code: BitCode, label: int = 0) -> int:
    return ix.insert(code, label)


def substring_balance(a: BitCode, b: BitCode, t: int) -> tuple[list[int], float]:
    """Per-substring Hamming distances and their RMS deviation from ``r/t``.

    A deviation of zero means the disagreement is spread evenly over the
    ``t`` substrings, the layout for which MIH candidates are all true
    neighbors.
    """
    if a.width != b.width:
        raise DimensionError(f"width mismatch: {a.width} vs {b.width}")
    s = substring_width(a.width, t)
    diff = a.value ^ b.value
    dists = [part.bit_count() for part in split_value(diff, t, s)]
    target = hamming(a, b) / t
    deviation = math.sqrt(sum((d - target) ** 2 for d in dists) / t)
    return dists, deviation
