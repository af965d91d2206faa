"""Class-aware pyramid scaling (CAPS) and the naive single-size baseline.

Each class subset is voxelized on its own, at a voxel size of l * V where
the pyramid level l depends only on that class's point count, so scores of
different classes never pool together.  The naive baseline voxelizes the
whole scene at one size and mixes classes inside boundary voxels.

Voxelization runs in original coordinates (pooling positions, scores and
offsets together); grouping afterwards shifts the pooled centroids by the
pooled offsets.  Quantizing in offset-shifted space instead would collapse
a well-predicted instance to a handful of cells and starve the component
size filter.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .core import VoxelGrid, voxelize
from .errors import InvalidArgumentError
from .grouping import InstanceProposal, ProposalSet, class_subset

__all__ = ["CapsClass", "CapsOutput", "NaiveOutput", "pyramid_level",
           "caps_downscale", "inverse_caps", "naive_downscale",
           "inverse_voxel_proposals", "DEFAULT_THRESHOLDS"]

DEFAULT_THRESHOLDS = (1e5, 1e6, math.inf)


def _check_thresholds(t):
    t = tuple(float(x) for x in t)
    if len(t) == 0 or not math.isinf(t[-1]):
        raise InvalidArgumentError("thresholds must end with +inf")
    if any(a >= b for a, b in zip(t, t[1:])):
        raise InvalidArgumentError("thresholds must be strictly increasing")
    return t


def pyramid_level(count, thresholds=DEFAULT_THRESHOLDS):
    """Smallest 1-based level l with thresholds[l-1] > count."""
    t = _check_thresholds(thresholds)
    if count < 0:
        raise InvalidArgumentError("count must be non-negative")
    for j, tj in enumerate(t, start=1):
        if tj > count:
            return j
    raise AssertionError("unreachable: last threshold is +inf")


@dataclass(frozen=True)
class CapsClass:
    """One class's downscaled elements plus the inverse mapping."""

    class_id: int
    level: int
    grid: VoxelGrid                # over the class subset, local indices
    member_indices: np.ndarray     # subset -> original element ids
    member_scores: np.ndarray      # original class-c scores of the subset
    positions: np.ndarray          # (M, 3) member centroids
    scores: np.ndarray             # (M,) pooled class-c scores
    offsets: np.ndarray            # (M, 3) pooled offsets

    @property
    def n_elements(self):
        return self.positions.shape[0]

    def elements_to_members(self, element_ids):
        """Original element ids covered by the given downscaled elements."""
        element_ids = np.asarray(element_ids, dtype=np.int64)
        if element_ids.size and (element_ids.min() < 0
                                 or element_ids.max() >= self.n_elements):
            raise InvalidArgumentError("downscaled element id out of range")
        parts = [self.grid.points_of(e) for e in element_ids]
        local = np.concatenate(parts) if parts else np.zeros(0, np.int64)
        out = self.member_indices[local]
        out.sort()
        return out


@dataclass
class CapsOutput:
    base_voxel: float
    thresholds: tuple
    tau: float
    classes: Dict[int, CapsClass] = field(default_factory=dict)

    def aggregate(self):
        """All downscaled elements across classes with per-element class tag."""
        if not self.classes:
            return (np.zeros((0, 3), np.float32), np.zeros(0),
                    np.zeros((0, 3)), np.zeros(0, np.int64))
        ks = sorted(self.classes)
        pos = np.concatenate([self.classes[c].positions for c in ks])
        sco = np.concatenate([self.classes[c].scores for c in ks])
        off = np.concatenate([self.classes[c].offsets for c in ks])
        cid = np.concatenate([np.full(self.classes[c].n_elements, c, np.int64)
                              for c in ks])
        return pos, sco, off, cid


def caps_downscale(positions, scores, offsets, base_voxel,
                   thresholds=DEFAULT_THRESHOLDS, tau=0.2):
    """Per-class pyramid voxelization with mean pooling.

    For class c: slice its tau-subset, pick level l from the subset size,
    voxelize the subset at l * base_voxel pooling the class-c score column
    and the offsets.  Class subsets overlap when points clear tau for
    several classes; each class pools only its own scores.
    """
    if not (np.isscalar(base_voxel) and float(base_voxel) > 0):
        raise InvalidArgumentError("base voxel size must be positive")
    t = _check_thresholds(thresholds)
    positions = np.asarray(positions, dtype=np.float32)
    scores = np.asarray(scores)
    offsets = np.asarray(offsets, dtype=np.float32)
    out = CapsOutput(float(base_voxel), t, float(tau))
    for c in range(scores.shape[1]):
        sub = class_subset(scores, c, tau)
        if sub.size == 0:
            continue
        level = pyramid_level(sub.size, t)
        feats = np.concatenate([scores[sub, c:c + 1], offsets[sub]], axis=1)
        grid, pooled = voxelize(positions[sub], feats, level * float(base_voxel))
        out.classes[c] = CapsClass(
            class_id=c, level=level, grid=grid,
            member_indices=sub, member_scores=np.asarray(scores[sub, c]),
            positions=grid.voxel_centroids,
            scores=pooled[:, 0], offsets=pooled[:, 1:4])
    return out


def inverse_caps(proposals, caps):
    """Replace downscaled-element members by their original elements.

    Confidence is recomputed as the mean original class score over the
    restored members.
    """
    restored = []
    for p in proposals:
        if p.class_id not in caps.classes:
            raise InvalidArgumentError(
                "proposal references class %d absent from CAPS output" % p.class_id)
        cc = caps.classes[p.class_id]
        members = cc.elements_to_members(p.point_indices)
        lookup = np.searchsorted(cc.member_indices, members)
        conf = float(np.mean(cc.member_scores[lookup]))
        restored.append(InstanceProposal(p.class_id, members, conf))
    return ProposalSet(restored)


@dataclass(frozen=True)
class NaiveOutput:
    """Whole-scene single-size downscaling (CAPS ablation baseline)."""

    voxel_size: float
    grid: VoxelGrid
    positions: np.ndarray   # (M, 3) centroids
    scores: np.ndarray      # (M, C) pooled full rows — classes mix here
    offsets: np.ndarray     # (M, 3)


def naive_downscale(positions, scores, offsets, voxel_size):
    """Voxelize the whole scene at one size, pooling full score rows."""
    if not (np.isscalar(voxel_size) and float(voxel_size) > 0):
        raise InvalidArgumentError("voxel size must be positive")
    positions = np.asarray(positions, dtype=np.float32)
    scores = np.asarray(scores)
    offsets = np.asarray(offsets, dtype=np.float32)
    feats = np.concatenate([scores, offsets], axis=1)
    grid, pooled = voxelize(positions, feats, float(voxel_size))
    c = scores.shape[1]
    return NaiveOutput(float(voxel_size), grid, grid.voxel_centroids,
                       pooled[:, :c], pooled[:, c:])


def inverse_voxel_proposals(proposals, grid, scores):
    """Expand voxel-level proposals to point level through a VoxelGrid.

    Used by the naive baseline and by late devoxelization; confidence is
    recomputed over the restored members from `scores` (N, C).
    """
    restored = []
    for p in proposals:
        parts = [grid.points_of(v) for v in np.asarray(p.point_indices)]
        members = np.concatenate(parts) if parts else np.zeros(0, np.int64)
        members.sort()
        conf = float(np.mean(scores[members, p.class_id])) if members.size else 0.0
        restored.append(InstanceProposal(p.class_id, members, conf))
    return ProposalSet(restored)
