"""Evaluation: score-threshold PR, mask IoU, greedy matching, AP family."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import InvalidArgumentError

__all__ = ["PRPoint", "APResult", "GTInstance", "semantic_pr", "macro_recall",
           "mask_iou", "match_proposals", "average_precision",
           "matching_precision_recall", "gt_instances_from_scene",
           "AP_STRICT_THRESHOLDS"]

AP_STRICT_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.951, 0.05), 2))


@dataclass(frozen=True)
class PRPoint:
    """Per-class recall/precision of the score-threshold predicate.

    recall = |{i: s_ic > tau and gt_i = c}| / |{i: gt_i = c}|
    precision = same numerator / |{i: s_ic > tau}|
    Either is None when its denominator is zero (excluded from macro means).
    """

    class_id: int
    tau: float
    recall: Optional[float]
    precision: Optional[float]
    tp: int
    n_gt: int
    n_pred: int


def semantic_pr(scores, gt_semantic, tau):
    """One PRPoint per class; gt ignore-sentinel (-1) points are excluded."""
    scores = np.asarray(scores)
    gt = np.asarray(gt_semantic)
    valid = gt >= 0
    out = []
    for c in range(scores.shape[1]):
        pred = scores[:, c] > tau
        is_c = valid & (gt == c)
        tp = int(np.count_nonzero(pred & is_c))
        n_gt = int(np.count_nonzero(is_c))
        n_pred = int(np.count_nonzero(pred & valid))
        rec = tp / n_gt if n_gt else None
        prec = tp / n_pred if n_pred else None
        out.append(PRPoint(c, float(tau), rec, prec, tp, n_gt, n_pred))
    return out


def macro_recall(pr_points):
    vals = [p.recall for p in pr_points if p.recall is not None]
    return float(np.mean(vals)) if vals else None


def mask_iou(a, b):
    """|a n b| / |a u b| over index sets; both empty -> 0."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    inter = np.intersect1d(a, b, assume_unique=False).size
    union = np.union1d(a, b).size
    return inter / union if union else 0.0


@dataclass(frozen=True)
class GTInstance:
    class_id: int
    point_indices: np.ndarray


def gt_instances_from_scene(scene):
    """Ground-truth instances (class, member indices) from gt label arrays."""
    if scene.gt_instance is None or scene.gt_semantic is None:
        raise InvalidArgumentError("scene has no ground-truth labels")
    inst = scene.gt_instance
    out = []
    for gid in np.unique(inst):
        if gid < 0:
            continue
        members = np.flatnonzero(inst == gid).astype(np.int64)
        cls = int(scene.gt_semantic[members[0]])
        out.append(GTInstance(cls, members))
    return out


def _ranked(proposals):
    """Proposals sorted by descending confidence; ties by class then
    smallest member index (deterministic ranking)."""
    def key(p):
        first = int(p.point_indices[0]) if len(p.point_indices) else -1
        return (-p.confidence, p.class_id, first)
    return sorted(proposals, key=key)


def match_proposals(proposals, gt_instances, iou_threshold):
    """Greedy confidence-descending matching; each gt used at most once.

    Returns a list aligned with the ranked proposals: (proposal, gt index or
    -1, iou).  A proposal is a true positive iff its best same-class unmatched
    gt has IoU strictly above the threshold.
    """
    ranked = _ranked(proposals)
    taken = np.zeros(len(gt_instances), dtype=bool)
    results = []
    for p in ranked:
        best, best_iou = -1, 0.0
        for gi, g in enumerate(gt_instances):
            if taken[gi] or g.class_id != p.class_id:
                continue
            iou = mask_iou(p.point_indices, g.point_indices)
            if iou > best_iou:
                best, best_iou = gi, iou
        if best >= 0 and best_iou > iou_threshold:
            taken[best] = True
            results.append((p, best, best_iou))
        else:
            results.append((p, -1, best_iou))
    return results


@dataclass(frozen=True)
class APResult:
    per_class: Dict[int, Dict[float, float]]  # class -> threshold -> AP
    ap: float       # macro mean over IoU 0.50:0.95 step 0.05
    ap50: float
    ap25: float


def _class_ap(matches, n_gt):
    """All-point-interpolated AP from a ranked TP/FP sequence."""
    if n_gt == 0:
        return None
    if not matches:
        return 0.0
    tp = np.cumsum([1 if m else 0 for m in matches], dtype=np.float64)
    fp = np.cumsum([0 if m else 1 for m in matches], dtype=np.float64)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # precision envelope, then area under the PR curve
    for i in range(precision.size - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    prev_r = 0.0
    ap = 0.0
    for r, pr in zip(recall, precision):
        ap += (r - prev_r) * pr
        prev_r = r
    return float(ap)


def average_precision(proposals, gt_instances, thresholds=None):
    """Macro AP at each IoU threshold plus the AP / AP50 / AP25 aggregates."""
    extra = {0.25, 0.50}
    strict = [float(t) for t in AP_STRICT_THRESHOLDS]
    wanted = sorted(set(strict) | extra | set(float(t) for t in (thresholds or [])))
    classes = sorted({g.class_id for g in gt_instances})
    per_class = {c: {} for c in classes}
    for thr in wanted:
        matched = match_proposals(proposals, gt_instances, thr)
        for c in classes:
            n_gt = sum(1 for g in gt_instances if g.class_id == c)
            flags = [gi >= 0 for (p, gi, _) in matched if p.class_id == c]
            per_class[c][thr] = _class_ap(flags, n_gt)

    def macro(thr):
        vals = [per_class[c][thr] for c in classes if per_class[c][thr] is not None]
        return float(np.mean(vals)) if vals else 0.0

    ap = float(np.mean([macro(t) for t in strict])) if classes else 0.0
    return APResult(per_class, ap, macro(0.50), macro(0.25))


def matching_precision_recall(proposals, gt_instances, iou_threshold=0.5):
    """mPrec/mRec: matching at one IoU threshold, no ranking integration."""
    matched = match_proposals(proposals, gt_instances, iou_threshold)
    tp = sum(1 for (_, gi, _) in matched if gi >= 0)
    n_prop = len(matched)
    n_gt = len(gt_instances)
    prec = tp / n_prop if n_prop else None
    rec = tp / n_gt if n_gt else None
    return prec, rec
