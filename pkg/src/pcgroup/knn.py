"""Radius-limited exact k-NN: brute-force oracle and octree backend."""

from dataclasses import dataclass

import numpy as np

from ._kernels import get_num_threads, kern
from .errors import InvalidArgumentError
from .octree import DEFAULT_LEVELS, _query, build_octree

__all__ = ["Adjacency", "vanilla_radius_knn", "batch_octree_knn",
           "build_adjacency", "auto_levels"]

DEFAULT_K = 32


@dataclass(frozen=True)
class Adjacency:
    """Per-query neighbor lists in CSR form.

    indices[indptr[q]:indptr[q+1]] are query q's neighbors sorted by
    (distance, point index); distances are Euclidean, all < r.
    """

    indptr: np.ndarray     # (Q+1,) int64
    indices: np.ndarray    # int32
    distances: np.ndarray  # float64
    k: int
    r: float

    @property
    def n_queries(self):
        return self.indptr.shape[0] - 1

    def neighbors(self, q):
        s, e = self.indptr[q], self.indptr[q + 1]
        return self.indices[s:e], self.distances[s:e]

    def lists(self):
        return [self.neighbors(q) for q in range(self.n_queries)]


def _validate(k, r):
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise InvalidArgumentError("k must be a positive integer")
    if not (np.isscalar(r) and np.isfinite(r) and r > 0):
        raise InvalidArgumentError("r must be a positive finite scalar")


def _pack(idx, d2, cnt, k, r):
    cnt = cnt.astype(np.int64)
    indptr = np.zeros(cnt.shape[0] + 1, dtype=np.int64)
    np.cumsum(cnt, out=indptr[1:])
    kcap = idx.shape[1]
    mask = np.arange(kcap)[None, :] < cnt[:, None]
    indices = idx[mask].astype(np.int32)
    distances = np.sqrt(d2[mask].astype(np.float64))
    return Adjacency(indptr, indices, distances, int(k), float(r))


def vanilla_radius_knn(points, queries, k, r, exclude=None):
    """Exact k nearest points with distance < r, by full pairwise scan.

    Canonical (distance, point index) ordering; the equivalence oracle for
    the octree backend.  `exclude` optionally gives one point index to skip
    per query (used for self-queries).
    """
    _validate(k, r)
    points = np.ascontiguousarray(points, dtype=np.float32)
    queries = np.ascontiguousarray(queries, dtype=np.float32)
    if points.ndim != 2 or points.shape[1] not in (2, 3):
        raise InvalidArgumentError("points must be (N, d) with d in {2, 3}")
    if queries.ndim != 2 or queries.shape[1] != points.shape[1]:
        raise InvalidArgumentError("queries must match points' dimension")
    ptsT = np.ascontiguousarray(points.T)
    r2 = np.float32(np.float32(r) * np.float32(r))
    idx, d2, cnt = kern.brute_knn(ptsT, queries, int(k), r2, exclude,
                                  get_num_threads())
    return _pack(idx, d2, cnt, k, r)


def batch_octree_knn(tree, queries, k, r, exclude=None):
    """Octree-backed k-NN over a batch of queries (one task per query)."""
    idx, d2, cnt = _query(tree, queries, k, r, exclude)
    return _pack(idx, d2, cnt, k, r)


def auto_levels(n, d=3, target_leaf=64, max_levels=10):
    """Tree depth giving roughly `target_leaf` points per leaf."""
    levels = 1
    while levels < max_levels and (n >> (d * levels)) > target_leaf:
        levels += 1
    return levels


def build_adjacency(points, k, r, backend="vanilla", levels=DEFAULT_LEVELS):
    """Self-adjacency of a point set (self-matches excluded)."""
    points = np.ascontiguousarray(points, dtype=np.float32)
    exclude = np.arange(points.shape[0], dtype=np.int64)
    if backend == "vanilla":
        return vanilla_radius_knn(points, points, k, r, exclude=exclude)
    if backend == "octree":
        _validate(k, r)
        tree = build_octree(points, levels)
        return batch_octree_knn(tree, points, k, r, exclude=exclude)
    raise InvalidArgumentError("unknown backend %r" % (backend,))
