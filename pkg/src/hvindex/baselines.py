"""Reference searchers: exhaustive linear scan and a Hamming-space ball tree."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hvindex.bitcode import BitCode, CodeSet, hamming_to_many
from hvindex.errors import DimensionError, DomainError

DEFAULT_LEAF_CAP = 16


def _check(codes_width: int, q: BitCode, r: int) -> None:
    if q.width != codes_width:
        raise DimensionError(f"query width {q.width} does not match code width {codes_width}")
    if not 0 <= r <= codes_width:
        raise DomainError(f"radius {r} outside 0..{codes_width}")


def linear_scan(codes: CodeSet, q: BitCode, r: int) -> set[int]:
    """Ids of every code within Hamming distance ``r`` of ``q``."""
    _check(codes.width, q, r)
    dists = hamming_to_many(codes.matrix, q)
    return set(np.flatnonzero(dists <= r).tolist())


@dataclass
class BallTreeNode:
    pivot: BitCode
    pivot_id: int
    covering_radius: int
    size: int
    left: BallTreeNode | None = None
    right: BallTreeNode | None = None
    # leaves only: member ids, raw code values and distances to the pivot
    leaf_ids: list[int] | None = None
    leaf_values: list[int] | None = None
    leaf_dists: list[int] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf_ids is not None

    def iter_nodes(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.extend((node.right, node.left))

    def node_count(self) -> int:
        return sum(1 for _ in self.iter_nodes())


@dataclass
class BallQueryStats:
    nodes_visited: int = 0
    full_verifications: int = 0
    true_neighbors: int = 0
    verified_ids: set[int] = field(default_factory=set, repr=False)


class BallTree:
    """A built tree plus the code values it was built over."""

    def __init__(self, codes: CodeSet, leaf_cap: int = DEFAULT_LEAF_CAP):
        self.width = codes.width
        self.leaf_cap = leaf_cap
        self.labels = list(codes.labels)
        self.root = balltree_build(codes, leaf_cap)
        self.size = len(codes)

    def __len__(self) -> int:
        return self.size

    def search(self, q: BitCode, r: int) -> tuple[set[int], BallQueryStats]:
        return balltree_search(self.root, q, r)


def _dist_row(values: list[int], pivot: int, ids: list[int]) -> list[int]:
    return [(values[i] ^ pivot).bit_count() for i in ids]


def balltree_build(codes: CodeSet, leaf_cap: int = DEFAULT_LEAF_CAP) -> BallTreeNode:
    """Build a ball tree by recursive two-pivot median splits.

    At each internal node the first split pivot is the member farthest from
    the node's own pivot and the second is the member farthest from the
    first.  Members are ordered by ``d(x, p1) - d(x, p2)`` (ties by id) and
    cut at the median; each half becomes a child whose pivot is the split
    pivot it sided with.  The root pivot is code 0.
    """
    if len(codes) == 0:
        raise DomainError("cannot build a ball tree over an empty code set")
    if leaf_cap < 1:
        raise DomainError(f"leaf_cap must be >= 1, got {leaf_cap}")
    values = codes.values
    return _build_node(codes, values, list(range(len(values))), 0, leaf_cap)


def _build_node(codes: CodeSet, values: list[int], ids: list[int], pivot_id: int, leaf_cap: int) -> BallTreeNode:
    dists = _dist_row(values, values[pivot_id], ids)
    node = BallTreeNode(codes[pivot_id], pivot_id, max(dists), len(ids))
    if len(ids) <= leaf_cap:
        node.leaf_ids = list(ids)
        node.leaf_values = [values[i] for i in ids]
        node.leaf_dists = dists
        return node

    p1 = ids[max(range(len(ids)), key=lambda i: (dists[i], -ids[i]))]
    d1 = _dist_row(values, values[p1], ids)
    p2 = ids[max(range(len(ids)), key=lambda i: (d1[i], -ids[i]))]
    d2 = _dist_row(values, values[p2], ids)
    if d1[ids.index(p2)] == 0:
        # every member coincides with p1; split by id to keep depth bounded
        order = list(range(len(ids)))
    else:
        order = sorted(range(len(ids)), key=lambda i: (d1[i] - d2[i], ids[i]))
    half = len(ids) // 2
    near = [ids[i] for i in order[:half]]
    far = [ids[i] for i in order[half:]]
    node.left = _build_node(codes, values, near, p1 if p1 in near else near[0], leaf_cap)
    node.right = _build_node(codes, values, far, p2 if p2 in far else far[0], leaf_cap)
    return node


def balltree_search(root: BallTreeNode, q: BitCode, r: int) -> tuple[set[int], BallQueryStats]:
    """Exact r-neighbors of ``q`` with node and verification accounting.

    A subtree is skipped when ``d(q, pivot) > r + covering_radius``.  Inside a
    leaf, a member whose stored pivot distance differs from ``d(q, pivot)``
    by more than ``r`` is skipped without a full comparison.  Every code
    compared in full (pivots included) counts once toward
    ``full_verifications``.
    """
    _check(root.pivot.width, q, r)
    stats = BallQueryStats()
    found: set[int] = set()
    verified = stats.verified_ids
    qv = q.value
    stack = [root]
    while stack:
        node = stack.pop()
        stats.nodes_visited += 1
        dq = (node.pivot.value ^ qv).bit_count()
        verified.add(node.pivot_id)
        if dq <= r:
            found.add(node.pivot_id)
        if dq > r + node.covering_radius:
            continue
        if node.is_leaf:
            for idx, value, dx in zip(node.leaf_ids, node.leaf_values, node.leaf_dists):
                if abs(dq - dx) > r or idx in verified:
                    continue
                verified.add(idx)
                if (value ^ qv).bit_count() <= r:
                    found.add(idx)
        else:
            stack.append(node.right)
            stack.append(node.left)
    stats.full_verifications = len(verified)
    stats.true_neighbors = len(found)
    return found, stats


def balltree_query(root: BallTreeNode, q: BitCode, r: int) -> tuple[set[int], int]:
    """Exact r-neighbors of ``q`` and the number of nodes visited."""
    found, stats = balltree_search(root, q, r)
    return found, stats.nodes_visited
