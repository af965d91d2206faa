"""Full 2^d-ary spatial tree with breadth-first arithmetic indexing.

Node i's children are ch_j(i) = i * 2^d + j for j in 1..2^d, so the tree can
be traversed with an explicit queue and no per-node pointers.  Leaves occupy
the last level; a leaf's bucket is addressed by data(i) = i - (number of
non-leaf nodes).  Child ordinal j-1 is read as a d-bit mask with bit a
selecting the high half along axis a; points on a splitting plane go high.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import assign_leaves, get_num_threads, kern
from .core import AABB
from .errors import InvalidArgumentError

__all__ = ["Octree", "build_octree", "child_index", "data_index", "node_box",
           "sphere_box_intersects", "octree_radius_knn",
           "level_offset", "total_nodes", "DEFAULT_LEVELS"]

DEFAULT_LEVELS = 3


def level_offset(level, d):
    """Index of the first node at `level` = sum_{m<level} 2^{md}."""
    return sum((1 << (d * m)) for m in range(level))


def total_nodes(levels, d):
    return level_offset(levels + 1, d)


def child_index(i, j, d):
    """Breadth-first index of child j (1-based ordinal) of node i."""
    nchild = 1 << d
    if not 1 <= j <= nchild:
        raise InvalidArgumentError("child ordinal must be in 1..%d" % nchild)
    if i < 0:
        raise InvalidArgumentError("node index must be non-negative")
    return i * nchild + j

def data_index(i, levels, d):
    """Leaf bucket slot of leaf node i: i minus the non-leaf node count."""
    lo = level_offset(levels, d)
    hi = level_offset(levels + 1, d)
    if not lo <= i < hi:
        raise InvalidArgumentError("node %d is not a leaf of a %d-level tree" % (i, levels))
    return i - lo


@dataclass(frozen=True)
class Octree:
    """Immutable spatial index; safe for concurrent queries."""

    dim: int
    levels: int
    root_box: AABB                 # tight box, float64
    root_min: np.ndarray           # (d,) float32, inflated query/build box
    root_len: np.ndarray           # (d,) float32
    indptr: np.ndarray             # (2^{d*levels}+1,) int64 leaf bucket CSR
    order: np.ndarray              # (N,) int32: bucket slot -> point index
    points_sorted: np.ndarray      # (d, N) float32, points in bucket order
    positions: np.ndarray          # (N, d) float32 original points

    @property
    def n_points(self):
        return self.positions.shape[0]

    @property
    def n_leaves(self):
        return 1 << (self.dim * self.levels)

    def leaf_bucket(self, slot):
        """Point indices stored in leaf data slot `slot` (ascending)."""
        return self.order[self.indptr[slot]:self.indptr[slot + 1]]


def build_octree(positions, levels=DEFAULT_LEVELS):
    """Build the full tree over the tight bounding box of `positions`.

    The box used for subdivision is the tight AABB inflated by a 1e-9
    relative epsilon so that boundary points land strictly inside.  All
    2^{d*levels} leaves exist; empty ones have empty buckets.
    """
    if not (isinstance(levels, (int, np.integer)) and 1 <= levels <= 10):
        raise InvalidArgumentError("levels must be an integer in [1, 10]")
    positions = np.ascontiguousarray(positions, dtype=np.float32)
    if positions.ndim != 2 or positions.shape[1] not in (2, 3):
        raise InvalidArgumentError("positions must be (N, d) with d in {2, 3}")
    n, d = positions.shape
    n_leaves = 1 << (d * int(levels))
    if n > 0:
        lo = positions.min(axis=0).astype(np.float64)
        hi = positions.max(axis=0).astype(np.float64)
    else:
        lo = np.zeros(d)
        hi = np.zeros(d)
    span = hi - lo
    pad = 1e-9 * np.maximum(span, 1.0)
    root_box = AABB(lo, hi)
    rmin = (lo - pad).astype(np.float32)
    rlen = ((hi + pad) - (lo - pad)).astype(np.float32)
    # guarantee a strictly positive float32 extent even for degenerate axes
    rlen = np.maximum(rlen, np.float32(1e-30))
    if n > 0:
        slots = assign_leaves(positions, rmin, rlen, int(levels))
        order = np.argsort(slots, kind="stable").astype(np.int32)
        counts = np.bincount(slots, minlength=n_leaves)
    else:
        order = np.zeros(0, dtype=np.int32)
        counts = np.zeros(n_leaves, dtype=np.int64)
    indptr = np.zeros(n_leaves + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    pts_sorted = np.ascontiguousarray(positions[order].T)
    return Octree(d, int(levels), root_box, rmin, rlen, indptr, order,
                  pts_sorted, positions)


def node_box(i, tree):
    """Axis-aligned box of node i, by decoding its child-ordinal path."""
    d = tree.dim
    nchild = 1 << d
    if not 0 <= i < total_nodes(tree.levels, d):
        raise InvalidArgumentError("node index %d out of range" % i)
    # find the node's level and its path of child ordinals from the root
    level = 0
    while level_offset(level + 1, d) <= i:
        level += 1
    local = i - level_offset(level, d)
    digits = []
    for _ in range(level):
        digits.append(local % nchild)
        local //= nchild
    digits.reverse()
    lo = tree.root_box.min.copy()
    hi = tree.root_box.max.copy()
    for mask in digits:
        mid = 0.5 * (lo + hi)
        for a in range(d):
            if mask & (1 << a):
                lo[a] = mid[a]
            else:
                hi[a] = mid[a]
    return AABB(lo, hi)


def sphere_box_intersects(box, center, r):
    """True iff the clamped-point distance from center to box is <= r."""
    if r < 0:
        raise InvalidArgumentError("radius must be non-negative")
    c = np.asarray(center, dtype=np.float64)
    nearest = np.clip(c, box.min, box.max)
    return float(np.sum((c - nearest) ** 2)) <= float(r) ** 2


def _query(tree, queries, k, r, exclude=None):
    """Shared batch query path; returns raw (idx, d2, cnt) kernel output."""
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise InvalidArgumentError("k must be a positive integer")
    if not (np.isscalar(r) and np.isfinite(r) and r > 0):
        raise InvalidArgumentError("r must be a positive finite scalar")
    queries = np.ascontiguousarray(queries, dtype=np.float32)
    if queries.ndim != 2 or queries.shape[1] != tree.dim:
        raise InvalidArgumentError("queries must be (Q, %d)" % tree.dim)
    r2 = np.float32(np.float32(r) * np.float32(r))
    return kern.octree_knn(tree.points_sorted, tree.order, tree.indptr,
                           tree.root_min, tree.root_len, tree.levels,
                           queries, int(k), r2, exclude, get_num_threads())


def octree_radius_knn(tree, q, k, r):
    """Up to k nearest points within distance < r of a single query.

    Traversal follows the breadth-first queue algorithm: pop a node, prune it
    if its box misses the query ball, collect leaf buckets, push children by
    index arithmetic.  Returns (indices, distances) sorted by
    (distance, index) ascending; identical to the brute-force oracle.
    """
    q = np.asarray(q, dtype=np.float32).reshape(1, -1)
    idx, d2, cnt = _query(tree, q, k, r)
    m = int(cnt[0])
    return idx[0, :m].astype(np.int64), np.sqrt(d2[0, :m].astype(np.float64))
