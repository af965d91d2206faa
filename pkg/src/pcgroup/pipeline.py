"""End-to-end grouping pipeline with mode toggles and per-stage timing.

Toggles: use_octree (k-NN backend), use_caps (per-class pyramid
downscaling), late_devox (run every intermediate stage on voxels and convert
to points only at the end).  Proposals are identical across backends; the
toggles change runtime only, except that CAPS applies the component-size
filter at downscaled-element granularity.
"""

import time
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .caps import (DEFAULT_THRESHOLDS, caps_downscale, inverse_caps,
                   inverse_voxel_proposals)
from .core import tight_bbox, voxelize
from .errors import InvalidArgumentError, InvalidDataError
from .grouping import (GroupingConfig, InstanceProposal, ProposalSet,
                       class_subset, components_from_adjacency)
from .knn import auto_levels, build_adjacency

__all__ = ["PipelineConfig", "StageTimings", "PRESETS", "run", "back_fuse",
           "proposals_to_boxes", "run_report"]

# dataset presets: (input voxel size, grouping bandwidth), meters
PRESETS = {
    "scannet": (0.02, 0.04),
    "s3dis": (0.02, 0.04),
    "stpls3d": (0.33, 0.90),
    "semantickitti": (0.05, 0.10),
}


@dataclass(frozen=True)
class PipelineConfig:
    tau: float = 0.2
    radius: float = 0.04
    k: int = 32
    min_points: int = 50
    octree_levels: Optional[int] = None   # None -> depth chosen from subset size
    use_octree: bool = False
    use_caps: bool = False
    caps_base_voxel: Optional[float] = None   # defaults to input_voxel
    caps_thresholds: Tuple[float, ...] = DEFAULT_THRESHOLDS
    late_devox: bool = False
    input_voxel: float = 0.02

    def __post_init__(self):
        GroupingConfig(self.tau, self.radius, self.k, self.min_points)  # validate
        if self.input_voxel <= 0:
            raise InvalidArgumentError("input_voxel must be positive")
        if self.octree_levels is not None and not 1 <= self.octree_levels <= 10:
            raise InvalidArgumentError("octree_levels must be in [1, 10]")

    @classmethod
    def from_preset(cls, name, **overrides):
        if name not in PRESETS:
            raise InvalidArgumentError("unknown preset %r" % (name,))
        voxel, bandwidth = PRESETS[name]
        base = dict(input_voxel=voxel, radius=bandwidth)
        base.update(overrides)
        return cls(**base)

    @property
    def base_voxel(self):
        return self.caps_base_voxel if self.caps_base_voxel is not None else self.input_voxel


@dataclass
class StageTimings:
    point_wise: float = 0.0   # input voxelization / element prep
    knn: float = 0.0
    grouping: float = 0.0
    top_down: float = 0.0     # inverse scaling, devoxelization, confidence, filtering
    total: float = 0.0
    r_eff_log: dict = field(default_factory=dict)  # per-class grouping radius used

    def as_dict(self):
        return {"point_wise": self.point_wise, "knn": self.knn,
                "grouping": self.grouping, "top_down": self.top_down,
                "total": self.total}


def _group_class(shifted, radius, config, timings):
    """Timed adjacency + components for one class subset."""
    n = shifted.shape[0]
    if n == 0:
        return []
    if n == 1:
        return [np.zeros(1, dtype=np.int64)]
    backend = "octree" if config.use_octree else "vanilla"
    levels = config.octree_levels
    if levels is None:
        levels = auto_levels(n, shifted.shape[1])
    t0 = time.perf_counter()
    adj = build_adjacency(shifted, config.k, radius, backend, levels=levels)
    t1 = time.perf_counter()
    comps = components_from_adjacency(adj)
    t2 = time.perf_counter()
    timings.knn += t1 - t0
    timings.grouping += t2 - t1
    return comps


def run(scene, config):
    """Execute the grouping pipeline; returns (ProposalSet, StageTimings).

    Deterministic for fixed (scene, config): proposals are ordered by
    (class_id, smallest member index) and do not depend on thread count.
    """
    if scene.semantic_scores.size == 0 and scene.n_points > 0:
        raise InvalidDataError("scene has no semantic scores")
    timings = StageTimings()
    t_begin = time.perf_counter()

    # --- point-wise stage: element preparation -------------------------
    t0 = time.perf_counter()
    n_classes = scene.n_classes
    if config.late_devox and scene.n_points > 0:
        feats = np.concatenate(
            [scene.semantic_scores, scene.offsets], axis=1)
        grid, pooled = voxelize(scene.positions, feats, config.input_voxel)
        el_pos = grid.voxel_centroids
        el_scores = pooled[:, :n_classes]
        el_off = pooled[:, n_classes:].astype(np.float32)
    else:
        grid = None
        el_pos = scene.positions
        el_scores = scene.semantic_scores
        el_off = scene.offsets
    timings.point_wise = time.perf_counter() - t0

    r_eff_log = {}
    element_props = []
    caps_out = None
    if config.use_caps and el_pos.shape[0] > 0:
        t0 = time.perf_counter()
        caps_out = caps_downscale(el_pos, el_scores, el_off,
                                  config.base_voxel, config.caps_thresholds,
                                  config.tau)
        timings.point_wise += time.perf_counter() - t0
        for c in sorted(caps_out.classes):
            cc = caps_out.classes[c]
            shifted = cc.positions.astype(np.float32) + cc.offsets.astype(np.float32)
            r_eff = max(config.radius, cc.level * config.base_voxel)
            r_eff_log[c] = r_eff
            timings.r_eff_log[c] = r_eff
            comps = _group_class(shifted, r_eff, config, timings)
            for comp in comps:
                if comp.shape[0] < config.min_points:
                    continue
                conf = float(np.mean(cc.scores[comp]))
                element_props.append(InstanceProposal(c, comp, conf))
    else:
        shifted_all = el_pos + el_off
        for c in range(n_classes):
            sub = class_subset(el_scores, c, config.tau)
            if sub.size == 0:
                continue
            comps = _group_class(
                np.ascontiguousarray(shifted_all[sub]), config.radius,
                config, timings)
            for comp in comps:
                if comp.shape[0] < config.min_points:
                    continue
                members = sub[comp]
                conf = float(np.mean(el_scores[members, c]))
                element_props.append(InstanceProposal(c, members, conf))

    # --- top-down stage: inverse scaling + devoxelization ----------------
    t0 = time.perf_counter()
    props = ProposalSet(element_props)
    if caps_out is not None:
        props = inverse_caps(props, caps_out)
    if grid is not None:
        props = inverse_voxel_proposals(props, grid, scene.semantic_scores)
    # canonical output order regardless of intermediate representation
    def _key(p):
        first = int(p.point_indices[0]) if len(p.point_indices) else -1
        return (p.class_id, first)
    props = ProposalSet(sorted(props, key=_key))
    timings.top_down = time.perf_counter() - t0

    timings.total = time.perf_counter() - t_begin
    return props, timings


def back_fuse(semantic_labels, proposals):
    """Paste proposal classes onto a semantic label map.

    Proposals are applied in ascending confidence order, so on overlaps the
    most confident proposal's class survives.
    """
    fused = np.asarray(semantic_labels).copy()

    def key(p):
        first = int(p.point_indices[0]) if len(p.point_indices) else -1
        return (p.confidence, p.class_id, first)

    for p in sorted(proposals, key=key):
        fused[p.point_indices] = p.class_id
    return fused


def proposals_to_boxes(proposals, positions):
    """Tight axis-aligned box per proposal: (class_id, AABB, confidence)."""
    positions = np.asarray(positions)
    return [(p.class_id, tight_bbox(positions[p.point_indices]), p.confidence)
            for p in proposals]


def run_report(scene, config, proposals, timings, r_eff_log=None):
    """JSON-serializable run summary (timing fields are non-deterministic)."""
    if r_eff_log is None:
        r_eff_log = timings.r_eff_log
    return {
        "report_version": 1,
        "config": {
            "tau": config.tau, "radius": config.radius, "k": config.k,
            "min_points": config.min_points,
            "octree_levels": config.octree_levels,
            "use_octree": config.use_octree, "use_caps": config.use_caps,
            "caps_base_voxel": config.base_voxel,
            "caps_thresholds": [t if t != float("inf") else "inf"
                                for t in config.caps_thresholds],
            "late_devox": config.late_devox,
            "input_voxel": config.input_voxel,
        },
        "n_points": int(scene.n_points),
        "n_classes": int(scene.n_classes),
        "n_proposals": len(proposals),
        "timings": timings.as_dict(),
        "r_eff": r_eff_log or {},
        "proposals": [
            {"class_id": int(p.class_id), "size": int(len(p.point_indices)),
             "confidence": float(p.confidence)}
            for p in proposals
        ],
    }
