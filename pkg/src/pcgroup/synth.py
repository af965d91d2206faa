"""Deterministic synthetic scenes with ground truth and controlled corruption.

All randomness goes through numpy's PCG64 via ``default_rng`` with spawned
seed sequences — one sub-stream per instance — so scenes are byte-identical
for a given seed regardless of generation order or platform.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import Scene
from .errors import GenerationError, InvalidArgumentError

__all__ = ["SynthSpec", "generate_scene", "corrupt_scores", "corrupt_offsets"]


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 8
    n_instances: int = 12                      # classes assigned round-robin
    points_per_instance: Tuple[int, int] = (600, 1200)
    instance_sizes: Optional[Tuple[int, ...]] = None  # explicit per-instance counts
    blob_shape: str = "gaussian"               # or "cuboid"
    blob_size: Tuple[float, float] = (0.10, 0.20)     # std dev / half extent, m
    fixed_density: Optional[float] = None      # points/m^3; sizes blobs by count
    extent: Tuple[float, float, float] = (10.0, 10.0, 3.0)
    min_separation: float = 1.0                # between instance centers, m
    confusion_rate: float = 0.0
    confused_true_range: Tuple[float, float] = (0.25, 0.45)
    confused_wrong_range: Tuple[float, float] = (0.46, 0.58)
    clean_true_range: Tuple[float, float] = (0.60, 0.95)
    other_score_range: Tuple[float, float] = (0.0, 0.10)
    offset_sigma: float = 0.0
    n_background: int = 1000
    background_floor: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.blob_shape not in ("gaussian", "cuboid"):
            raise InvalidArgumentError("blob_shape must be gaussian or cuboid")
        for rng_ in (self.points_per_instance, self.blob_size,
                     self.confused_true_range, self.confused_wrong_range,
                     self.clean_true_range, self.other_score_range):
            if rng_[0] > rng_[1]:
                raise InvalidArgumentError("range %r is not ordered" % (rng_,))
        if not 0.0 <= self.confusion_rate <= 1.0:
            raise InvalidArgumentError("confusion_rate must be in [0, 1]")
        if self.instance_sizes is not None and len(self.instance_sizes) != self.n_instances:
            raise InvalidArgumentError("instance_sizes length must equal n_instances")


def _place_centers(spec, rng):
    ext = np.asarray(spec.extent, dtype=np.float64)
    centers = []
    for _ in range(spec.n_instances):
        for _attempt in range(200):
            c = rng.uniform(0.0, 1.0, 3) * ext
            if all(np.linalg.norm(c - p) > spec.min_separation for p in centers):
                centers.append(c)
                break
        else:
            raise GenerationError(
                "could not place %d instances with separation %.3g in extent %r"
                % (spec.n_instances, spec.min_separation, spec.extent))
    return np.asarray(centers)


def _scores_for(rng, n, n_classes, true_class, true_range, other_range):
    s = rng.uniform(other_range[0], other_range[1], (n, n_classes))
    s[:, true_class] = rng.uniform(true_range[0], true_range[1], n)
    return s


def generate_scene(spec):
    """Scene with clean scores (argmax = gt), ideal offsets, and background.

    Instance i belongs to class i mod n_classes.  Blob points are drawn from
    the instance's own sub-stream; gaussian blobs are clipped at two standard
    deviations so instances stay inside their separation budget.
    """
    root = np.random.SeedSequence(spec.seed)
    place_ss, bg_ss, *inst_ss = root.spawn(2 + spec.n_instances)
    centers = _place_centers(spec, np.random.default_rng(place_ss))

    pos_parts, score_parts, gt_sem, gt_inst = [], [], [], []
    for i in range(spec.n_instances):
        rng = np.random.default_rng(inst_ss[i])
        if spec.instance_sizes is not None:
            n = int(spec.instance_sizes[i])
        else:
            lo, hi = spec.points_per_instance
            n = int(rng.integers(lo, hi + 1))
        if spec.fixed_density is not None:
            # half extent such that the blob holds n points at fixed density
            size = 0.5 * (n / spec.fixed_density) ** (1.0 / 3.0)
        else:
            size = rng.uniform(*spec.blob_size)
        if spec.blob_shape == "gaussian":
            raw = rng.normal(0.0, size, (n, 3))
            raw = np.clip(raw, -2.0 * size, 2.0 * size)
        else:
            raw = rng.uniform(-size, size, (n, 3))
        cls = i % spec.n_classes
        pos_parts.append(centers[i] + raw)
        score_parts.append(_scores_for(rng, n, spec.n_classes, cls,
                                       spec.clean_true_range,
                                       spec.other_score_range))
        gt_sem.append(np.full(n, cls, np.int32))
        gt_inst.append(np.full(n, i, np.int32))

    if spec.n_background > 0:
        rng = np.random.default_rng(bg_ss)
        ext = np.asarray(spec.extent, dtype=np.float64)
        pos_parts.append(rng.uniform(0.0, 1.0, (spec.n_background, 3)) * ext)
        score_parts.append(rng.uniform(0.0, spec.background_floor,
                                       (spec.n_background, spec.n_classes)))
        gt_sem.append(np.full(spec.n_background, -1, np.int32))
        gt_inst.append(np.full(spec.n_background, -1, np.int32))

    positions = np.concatenate(pos_parts).astype(np.float32)
    scores = np.concatenate(score_parts).astype(np.float32)
    gt_sem = np.concatenate(gt_sem)
    gt_inst = np.concatenate(gt_inst)

    offsets = np.zeros_like(positions)
    for i in range(spec.n_instances):
        m = gt_inst == i
        centroid = positions[m].mean(axis=0)
        offsets[m] = centroid - positions[m]

    return Scene(positions, np.clip(scores, 0.0, 1.0), offsets, gt_sem, gt_inst)


def corrupt_scores(scene, spec):
    """Flip the argmax of a contiguous part of each instance to a wrong class.

    The confused fraction is drawn per instance from U(0, 2 * confusion_rate)
    (mean = confusion_rate); confused points are those nearest a random pole
    of the blob, mimicking part-level ambiguity.  Their true-class score stays
    above the default grouping threshold, which is the lever that lets soft
    grouping bridge the confusion while hard grouping splits.
    """
    if scene.gt_instance is None:
        raise InvalidArgumentError("corrupt_scores needs ground truth")
    if spec.confusion_rate == 0.0:
        return scene
    scores = scene.semantic_scores.astype(np.float64).copy()
    root = np.random.SeedSequence((spec.seed, 0x5C0E))
    streams = root.spawn(spec.n_instances)
    for i in range(spec.n_instances):
        rng = np.random.default_rng(streams[i])
        members = np.flatnonzero(scene.gt_instance == i)
        if members.size == 0:
            continue
        cls = int(scene.gt_semantic[members[0]])
        frac = min(rng.uniform(0.0, 2.0 * spec.confusion_rate), 0.95)
        n_conf = int(round(frac * members.size))
        pts = scene.positions[members].astype(np.float64)
        center = pts.mean(axis=0)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        pole = center + direction * np.abs(pts - center).max()
        nearest = np.argsort(np.linalg.norm(pts - pole, axis=1), kind="stable")
        confused = members[nearest[:n_conf]]
        wrong = int(rng.integers(0, scene.n_classes - 1))
        if wrong >= cls:
            wrong += 1
        scores[confused] = _scores_for(rng, confused.size, scene.n_classes,
                                       cls, spec.confused_true_range,
                                       spec.other_score_range)[:, :]
        scores[confused, wrong] = rng.uniform(*spec.confused_wrong_range,
                                              size=confused.size)
    return Scene(scene.positions, np.clip(scores, 0.0, 1.0).astype(np.float32),
                 scene.offsets, scene.gt_semantic, scene.gt_instance)


def corrupt_offsets(scene, sigma, seed=0):
    """Add zero-mean isotropic gaussian noise to the offset vectors."""
    if sigma == 0.0:
        return scene
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x0FF5)))
    noisy = scene.offsets + rng.normal(0.0, sigma, scene.offsets.shape).astype(np.float32)
    return Scene(scene.positions, scene.semantic_scores, noisy,
                 scene.gt_semantic, scene.gt_instance)
