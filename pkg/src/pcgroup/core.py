"""Scene containers, voxelization with invertible mapping, mean pooling."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyInputError, InvalidArgumentError, InvalidDataError

__all__ = ["Scene", "VoxelGrid", "AABB", "voxelize", "devoxelize", "tight_bbox"]


def _as_f32(a, name, ndim=2, width=None):
    a = np.asarray(a, dtype=np.float32)
    if a.ndim != ndim or (width is not None and a.shape[-1] != width):
        raise InvalidArgumentError("%s has wrong shape %r" % (name, a.shape))
    if not np.all(np.isfinite(a)):
        raise InvalidDataError("%s contains non-finite values" % name)
    return a


@dataclass(frozen=True)
class Scene:
    """A point cloud with per-point semantic scores and center offsets.

    positions: (N, 3) float32 meters.
    semantic_scores: (N, C) float32 in [0, 1]; rows need not sum to 1.
    offsets: (N, 3) float32 meters, pointing toward instance centers.
    gt_semantic / gt_instance: optional (N,) int32, -1 = ignore / no instance.
    """

    positions: np.ndarray
    semantic_scores: np.ndarray
    offsets: np.ndarray
    gt_semantic: Optional[np.ndarray] = None
    gt_instance: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = _as_f32(self.positions, "positions", width=3)
        sco = _as_f32(self.semantic_scores, "semantic_scores")
        off = _as_f32(self.offsets, "offsets", width=3)
        n = pos.shape[0]
        if sco.shape[0] != n or off.shape[0] != n:
            raise InvalidArgumentError("array lengths disagree")
        if sco.size and (sco.min() < 0.0 or sco.max() > 1.0):
            raise InvalidDataError("semantic scores must lie in [0, 1]")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "semantic_scores", sco)
        object.__setattr__(self, "offsets", off)
        for name in ("gt_semantic", "gt_instance"):
            g = getattr(self, name)
            if g is not None:
                g = np.asarray(g, dtype=np.int32)
                if g.shape != (n,):
                    raise InvalidArgumentError("%s must have length N" % name)
                object.__setattr__(self, name, g)

    @property
    def n_points(self):
        return self.positions.shape[0]

    @property
    def n_classes(self):
        return self.semantic_scores.shape[1]


@dataclass(frozen=True)
class AABB:
    """Axis-aligned box, min <= max componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidArgumentError("AABB bounds must be matching vectors")
        if np.any(lo > hi):
            raise InvalidArgumentError("AABB min exceeds max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)


@dataclass(frozen=True)
class VoxelGrid:
    """Invertible point->voxel quantization at a fixed cubic lattice.

    Voxels are ordered lexicographically by integer key.  The inverse map is
    stored in CSR form: point_order[indptr[v]:indptr[v+1]] are the points of
    voxel v, each slice sorted ascending.
    """

    voxel_size: float
    voxel_keys: np.ndarray          # (M, d) int64
    point_to_voxel: np.ndarray      # (N,) int64
    indptr: np.ndarray              # (M+1,) int64
    point_order: np.ndarray         # (N,) int64
    voxel_centroids: np.ndarray     # (M, d) float32

    @property
    def n_voxels(self):
        return self.voxel_keys.shape[0]

    @property
    def n_points(self):
        return self.point_to_voxel.shape[0]

    def points_of(self, v):
        return self.point_order[self.indptr[v]:self.indptr[v + 1]]

    @property
    def voxel_to_points(self):
        """List-of-arrays view of the inverse map (test convenience)."""
        return [self.points_of(v) for v in range(self.n_voxels)]


def voxel_keys_of(positions, voxel_size):
    """Integer lattice key per point: floor(position / voxel_size).

    The division is done in float64 so that float32 positions quantize
    stably; negative coordinates floor toward -inf.
    """
    return np.floor(np.asarray(positions, np.float64) / float(voxel_size)).astype(np.int64)


def voxelize(positions, features, voxel_size):
    """Quantize points to voxels, mean-pooling features and positions.

    Returns (VoxelGrid, voxel_features (M, F)).  Voxels appear in
    lexicographic key order, so the output is canonical and deterministic.
    """
    if not (np.isscalar(voxel_size) and float(voxel_size) > 0):
        raise InvalidArgumentError("voxel_size must be a positive scalar")
    positions = _as_f32(positions, "positions")
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    if not np.all(np.isfinite(features)):
        raise InvalidDataError("features contain non-finite values")
    n, d = positions.shape
    if features.shape[0] != n:
        raise InvalidArgumentError("positions/features length mismatch")
    if n == 0:
        grid = VoxelGrid(float(voxel_size), np.zeros((0, d), np.int64),
                         np.zeros(0, np.int64), np.zeros(1, np.int64),
                         np.zeros(0, np.int64), np.zeros((0, d), np.float32))
        return grid, np.zeros((0, features.shape[1]))
    keys = voxel_keys_of(positions, voxel_size)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel().astype(np.int64)
    m = uniq.shape[0]
    counts = np.bincount(inv, minlength=m)
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    order = np.argsort(inv, kind="stable").astype(np.int64)

    def pooled(arr):
        out = np.empty((m, arr.shape[1]), dtype=np.float64)
        for f in range(arr.shape[1]):
            out[:, f] = np.bincount(inv, weights=arr[:, f], minlength=m)
        return out / counts[:, None]

    feats = pooled(features)
    centroids = pooled(positions.astype(np.float64)).astype(np.float32)
    grid = VoxelGrid(float(voxel_size), uniq, inv, indptr, order, centroids)
    return grid, feats


def devoxelize(grid, voxel_values):
    """Broadcast per-voxel values back to the points (inverse mapping)."""
    voxel_values = np.asarray(voxel_values)
    if voxel_values.shape[0] != grid.n_voxels:
        raise InvalidArgumentError(
            "expected %d voxel rows, got %d" % (grid.n_voxels, voxel_values.shape[0]))
    return voxel_values[grid.point_to_voxel]


def tight_bbox(positions):
    """Componentwise min/max box of a non-empty point subset."""
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[0] == 0:
        raise EmptyInputError("tight_bbox needs a non-empty (n, d) array")
    return AABB(positions.min(axis=0), positions.max(axis=0))
