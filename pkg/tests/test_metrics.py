import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcgroup.core import Scene
from pcgroup.errors import InvalidArgumentError
from pcgroup.grouping import InstanceProposal, ProposalSet
from pcgroup.metrics import (AP_STRICT_THRESHOLDS, GTInstance,
                             average_precision, gt_instances_from_scene,
                             macro_recall, mask_iou, match_proposals,
                             matching_precision_recall, semantic_pr)


def _prop(cls, idx, conf):
    return InstanceProposal(cls, np.asarray(idx, np.int64), conf)


def _gt(cls, idx):
    return GTInstance(cls, np.asarray(idx, np.int64))


# --- mask IoU ----------------------------------------------------------------

def test_mask_iou_examples():
    assert mask_iou([0, 1, 2], [0, 1, 2]) == 1.0
    assert mask_iou([0, 1], [2, 3]) == 0.0
    assert np.isclose(mask_iou([0, 1, 2, 3], [2, 3, 4, 5]), 2 / 6)
    assert mask_iou([], []) == 0.0
    assert mask_iou([1], []) == 0.0


@settings(deadline=None, max_examples=30)
@given(st.lists(st.integers(0, 50), max_size=40),
       st.lists(st.integers(0, 50), max_size=40))
def test_mask_iou_properties(a, b):
    iou = mask_iou(a, b)
    assert 0.0 <= iou <= 1.0
    assert iou == mask_iou(b, a)                       # symmetry
    if set(a) == set(b) and a:
        assert iou == 1.0


# --- semantic PR -------------------------------------------------------------

def test_semantic_pr_example():
    scores = np.array([[0.9, 0.1],
                       [0.3, 0.7],
                       [0.6, 0.5],
                       [0.1, 0.2]])
    gt = np.array([0, 1, 1, -1])
    pr = semantic_pr(scores, gt, tau=0.4)
    # class 0: preds {0, 2} (3 is ignored), gt {0} -> tp 1
    assert pr[0].tp == 1 and pr[0].n_gt == 1 and pr[0].n_pred == 2
    assert pr[0].recall == 1.0 and pr[0].precision == 0.5
    # class 1: preds {1, 2}, gt {1, 2} -> tp 2
    assert pr[1].recall == 1.0 and pr[1].precision == 1.0
    assert macro_recall(pr) == 1.0


def test_semantic_pr_none_denominators():
    scores = np.array([[0.05, 0.9]])
    gt = np.array([1])
    pr = semantic_pr(scores, gt, tau=0.5)
    assert pr[0].recall is None          # no gt of class 0
    assert pr[0].precision is None       # no predictions either
    assert macro_recall(pr) == 1.0       # only class 1 counts
    assert macro_recall(semantic_pr(scores, np.array([-1]), 0.5)) is None


def test_semantic_pr_strict_inequality():
    scores = np.array([[0.4]])
    gt = np.array([0])
    assert semantic_pr(scores, gt, tau=0.4)[0].tp == 0
    assert semantic_pr(scores, gt, tau=0.39999)[0].tp == 1


# --- matching ----------------------------------------------------------------

def test_match_respects_class_and_uses_gt_once():
    gts = [_gt(0, range(10)), _gt(1, range(10, 20))]
    props = ProposalSet([
        _prop(0, range(10), 0.9),        # perfect, class 0
        _prop(0, range(10), 0.8),        # duplicate: gt already taken
        _prop(1, range(10), 0.7),        # right mask, wrong class
    ])
    matched = match_proposals(props, gts, 0.5)
    assert [gi for (_, gi, _) in matched] == [0, -1, -1]
    assert matched[0][2] == 1.0


def test_match_greedy_by_confidence():
    gts = [_gt(0, range(10))]
    lo = _prop(0, range(10), 0.2)
    hi = _prop(0, list(range(8)) + [30, 31], 0.9)   # IoU 8/12
    matched = match_proposals(ProposalSet([lo, hi]), gts, 0.5)
    # the higher-confidence proposal claims the gt first
    assert matched[0][0] is hi and matched[0][1] == 0
    assert matched[1][0] is lo and matched[1][1] == -1


def test_match_threshold_is_strict():
    gts = [_gt(0, range(4))]
    half = _prop(0, [0, 1, 4, 5], 0.9)   # IoU = 2/6 = 1/3
    assert match_proposals(ProposalSet([half]), gts, 1 / 3)[0][1] == -1
    assert match_proposals(ProposalSet([half]), gts, 0.33)[0][1] == 0


# --- AP ----------------------------------------------------------------------

def test_ap_perfect_predictions():
    gts = [_gt(0, range(10)), _gt(1, range(10, 30)), _gt(0, range(30, 45))]
    props = ProposalSet([_prop(g.class_id, g.point_indices, 0.9) for g in gts])
    res = average_precision(props, gts)
    assert res.ap == 1.0 and res.ap50 == 1.0 and res.ap25 == 1.0
    for c in (0, 1):
        assert all(v == 1.0 for v in res.per_class[c].values())


def test_ap_hand_computed_mixed_ranking():
    # class 0: two gts; three proposals ranked TP, FP, TP
    gts = [_gt(0, range(10)), _gt(0, range(20, 30))]
    props = ProposalSet([
        _prop(0, range(10), 0.9),                       # TP
        _prop(0, range(40, 50), 0.8),                   # FP (no overlap)
        _prop(0, range(20, 30), 0.7),                   # TP
    ])
    res = average_precision(props, gts)
    # all-point AP: r=0.5 at p=1.0, then r=1.0 at p=2/3
    assert np.isclose(res.ap50, 0.5 * 1.0 + 0.5 * (2 / 3))
    assert np.isclose(res.ap25, res.ap50)


def test_ap_missed_gt_caps_recall():
    gts = [_gt(0, range(10)), _gt(0, range(20, 30))]
    props = ProposalSet([_prop(0, range(10), 0.9)])
    res = average_precision(props, gts)
    assert np.isclose(res.ap50, 0.5)


def test_ap_degrades_across_strict_thresholds():
    # subset covering 6 of 10 gt points: IoU exactly 0.6, so the proposal
    # counts at 0.50/0.55 but not at 0.60 and above (strict inequality)
    gts = [_gt(0, range(10))]
    props = ProposalSet([_prop(0, range(6), 0.9)])
    res = average_precision(props, gts)
    per = res.per_class[0]
    assert per[0.50] == 1.0 and per[0.55] == 1.0 and per[0.25] == 1.0
    assert per[0.60] == 0.0 and per[0.70] == 0.0
    assert np.isclose(res.ap, np.mean([per[t] for t in AP_STRICT_THRESHOLDS]))
    assert 0.0 < res.ap < 1.0


def test_ap_empty_inputs():
    gts = [_gt(0, range(5))]
    res = average_precision(ProposalSet([]), gts)
    assert res.ap50 == 0.0 and res.ap == 0.0
    res2 = average_precision(ProposalSet([_prop(0, range(5), 0.9)]), [])
    assert res2.ap50 == 0.0       # no gt classes -> defined as zero


def test_ap_macro_over_classes():
    gts = [_gt(0, range(10)), _gt(1, range(10, 20))]
    props = ProposalSet([_prop(0, range(10), 0.9)])   # class 1 missed entirely
    res = average_precision(props, gts)
    assert np.isclose(res.ap50, 0.5)


def test_matching_precision_recall():
    gts = [_gt(0, range(10)), _gt(0, range(20, 30))]
    props = ProposalSet([
        _prop(0, range(10), 0.9),
        _prop(0, range(50, 60), 0.8),
    ])
    prec, rec = matching_precision_recall(props, gts)
    assert prec == 0.5 and rec == 0.5
    assert matching_precision_recall(ProposalSet([]), gts) == (None, 0.0)
    assert matching_precision_recall(props, []) == (0.0, None)


# --- gt extraction -----------------------------------------------------------

def test_gt_instances_from_scene():
    n = 12
    pos = np.zeros((n, 3), np.float32)
    sco = np.full((n, 2), 0.5, np.float32)
    off = np.zeros((n, 3), np.float32)
    sem = np.array([0] * 5 + [1] * 5 + [-1, -1], np.int32)
    inst = np.array([0] * 5 + [1] * 5 + [-1, -1], np.int32)
    scene = Scene(pos, sco, off, gt_semantic=sem, gt_instance=inst)
    gts = gt_instances_from_scene(scene)
    assert len(gts) == 2
    assert gts[0].class_id == 0 and gts[0].point_indices.tolist() == [0, 1, 2, 3, 4]
    assert gts[1].class_id == 1

    bare = Scene(pos, sco, off)
    with pytest.raises(InvalidArgumentError):
        gt_instances_from_scene(bare)


@settings(deadline=None, max_examples=20)
@given(st.integers(0, 2**31))
def test_ap_bounds_and_perfect_consistency(seed):
    rng = np.random.default_rng(seed)
    n_gt = int(rng.integers(1, 6))
    gts, props = [], []
    cursor = 0
    for i in range(n_gt):
        size = int(rng.integers(3, 30))
        idx = np.arange(cursor, cursor + size)
        cursor += size + 5
        cls = int(rng.integers(0, 3))
        gts.append(_gt(cls, idx))
        if rng.random() < 0.7:
            props.append(_prop(cls, idx, float(rng.random())))
    res = average_precision(ProposalSet(props), gts)
    assert 0.0 <= res.ap <= res.ap50 + 1e-12
    assert res.ap50 <= res.ap25 + 1e-12 <= 1.0 + 1e-12
    if len(props) == n_gt:
        assert res.ap == 1.0
