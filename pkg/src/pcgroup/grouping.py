"""Soft score-threshold grouping and the hard-argmax baseline.

Soft grouping slices, for every class c, the subset of points whose class-c
score exceeds tau (a point may enter several class subsets), then connects
points closer than the grouping radius in offset-shifted space and keeps
components with at least min_points members.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvalidArgumentError
from .knn import auto_levels, build_adjacency

__all__ = ["GroupingConfig", "InstanceProposal", "ProposalSet",
           "shift_points", "class_subset", "radius_components",
           "components_from_adjacency", "soft_group", "hard_group"]


@dataclass(frozen=True)
class GroupingConfig:
    tau: float = 0.2          # score threshold
    radius: float = 0.04      # grouping bandwidth (meters)
    k: int = 32               # adjacency truncation
    min_points: int = 50      # minimum component size

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise InvalidArgumentError("tau must be in (0, 1)")
        if not self.radius > 0:
            raise InvalidArgumentError("radius must be positive")
        if self.k < 1:
            raise InvalidArgumentError("k must be >= 1")
        if self.min_points < 1:
            raise InvalidArgumentError("min_points must be >= 1")


@dataclass(frozen=True)
class InstanceProposal:
    class_id: int
    point_indices: np.ndarray   # strictly increasing int64
    confidence: float

    def __post_init__(self):
        idx = np.asarray(self.point_indices, dtype=np.int64)
        object.__setattr__(self, "point_indices", idx)


@dataclass
class ProposalSet:
    proposals: List[InstanceProposal] = field(default_factory=list)

    def __len__(self):
        return len(self.proposals)

    def __iter__(self):
        return iter(self.proposals)

    def __getitem__(self, i):
        return self.proposals[i]


def shift_points(positions, offsets):
    """Move each point by its offset vector (toward its instance center)."""
    positions = np.asarray(positions, dtype=np.float32)
    offsets = np.asarray(offsets, dtype=np.float32)
    if positions.shape != offsets.shape:
        raise InvalidArgumentError("positions/offsets shape mismatch")
    return positions + offsets


def class_subset(scores, c, tau):
    """Sorted indices of points with scores[:, c] > tau (strict)."""
    scores = np.asarray(scores)
    if not 0 <= c < scores.shape[1]:
        raise InvalidArgumentError("class %r out of range" % (c,))
    return np.flatnonzero(scores[:, c] > tau).astype(np.int64)


def components_from_adjacency(adj):
    """Connected components of a self-adjacency, canonically ordered.

    Union is over either direction of a link, so k-truncation does not
    disconnect what a mutual scan would join.  Members of each component are
    sorted ascending; components are ordered by smallest member.
    """
    n = adj.n_queries
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(adj.indptr))
    graph = coo_matrix((np.ones(rows.shape[0], dtype=np.int8),
                        (rows, adj.indices.astype(np.int64))), shape=(n, n))
    _, labels = connected_components(graph, directed=True, connection="weak")
    return _split_labels(labels)


def radius_components(sub_positions, radius, k=32, backend="vanilla"):
    """Connected components of the distance-< r link graph."""
    sub_positions = np.ascontiguousarray(sub_positions, dtype=np.float32)
    n = sub_positions.shape[0]
    if n == 0:
        return []
    if n == 1:
        return [np.zeros(1, dtype=np.int64)]
    levels = auto_levels(n, sub_positions.shape[1])
    adj = build_adjacency(sub_positions, k, radius, backend, levels=levels)
    return components_from_adjacency(adj)


def _split_labels(labels):
    # stable argsort groups members of one label contiguously in ascending
    # index order; emit the groups ordered by their smallest member
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    first_seen = np.sort(np.unique(labels, return_index=True)[1])
    comps = []
    for lab in labels[first_seen]:
        s = starts[lab]
        comps.append(order[s:s + counts[lab]].astype(np.int64))
    return comps


def _components_to_proposals(comps, members, scores_col, class_id, min_points):
    out = []
    for comp in comps:
        if comp.shape[0] < min_points:
            continue
        pts = members[comp]
        pts.sort()
        conf = float(np.mean(scores_col[pts]))
        out.append(InstanceProposal(int(class_id), pts, conf))
    return out


def soft_group(scene, shifted_positions, config, backend="vanilla"):
    """Per-class threshold slicing + radius components, unioned over classes.

    Proposal confidence is the mean member score for the proposal's class.
    Output order is (class_id, smallest member index).
    """
    scores = scene.semantic_scores
    proposals = []
    for c in range(scene.n_classes):
        sub = class_subset(scores, c, config.tau)
        if sub.size == 0:
            continue
        comps = radius_components(shifted_positions[sub], config.radius,
                                  config.k, backend)
        proposals.extend(_components_to_proposals(
            comps, sub, scores[:, c], c, config.min_points))
    return ProposalSet(proposals)


def hard_group(scene, shifted_positions, config, backend="vanilla"):
    """Baseline: each point belongs only to its argmax class (ties -> lowest id)."""
    scores = scene.semantic_scores
    if scene.n_points == 0:
        return ProposalSet([])
    labels = np.argmax(scores, axis=1)
    proposals = []
    for c in range(scene.n_classes):
        sub = np.flatnonzero(labels == c).astype(np.int64)
        if sub.size == 0:
            continue
        comps = radius_components(shifted_positions[sub], config.radius,
                                  config.k, backend)
        proposals.extend(_components_to_proposals(
            comps, sub, scores[:, c], c, config.min_points))
    return ProposalSet(proposals)
