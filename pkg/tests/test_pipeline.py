import json

import numpy as np
import pytest

from pcgroup.errors import InvalidArgumentError
from pcgroup.metrics import average_precision, gt_instances_from_scene
from pcgroup.pipeline import (PRESETS, PipelineConfig, back_fuse,
                              proposals_to_boxes, run, run_report)
from pcgroup.synth import SynthSpec, generate_scene


def _scene(seed=0, **kw):
    spec = SynthSpec(n_classes=4, n_instances=6, n_background=300,
                     points_per_instance=(400, 700), seed=seed, **kw)
    return generate_scene(spec)


def _props_equal(a, b):
    assert len(a) == len(b)
    for pa, pb in zip(a, b):
        assert pa.class_id == pb.class_id
        assert np.array_equal(pa.point_indices, pb.point_indices)
        assert np.isclose(pa.confidence, pb.confidence)


def test_config_validation_and_presets():
    with pytest.raises(InvalidArgumentError):
        PipelineConfig(tau=-0.1)
    with pytest.raises(InvalidArgumentError):
        PipelineConfig(input_voxel=0.0)
    with pytest.raises(InvalidArgumentError):
        PipelineConfig(octree_levels=0)
    with pytest.raises(InvalidArgumentError):
        PipelineConfig.from_preset("nuscenes")
    for name, (voxel, bandwidth) in PRESETS.items():
        cfg = PipelineConfig.from_preset(name)
        assert cfg.input_voxel == voxel and cfg.radius == bandwidth
    cfg = PipelineConfig.from_preset("scannet", k=16)
    assert cfg.k == 16 and cfg.base_voxel == 0.02


def test_run_baseline_recovers_clean_instances():
    scene = _scene(seed=1)
    cfg = PipelineConfig(min_points=50)
    props, timings = run(scene, cfg)
    res = average_precision(props, gt_instances_from_scene(scene))
    assert res.ap == 1.0 and res.ap50 == 1.0
    assert timings.total > 0
    assert timings.knn > 0 and timings.grouping > 0


def test_octree_toggle_gives_identical_proposals():
    scene = _scene(seed=2)
    base, _ = run(scene, PipelineConfig())
    fast, _ = run(scene, PipelineConfig(use_octree=True))
    _props_equal(base, fast)


def test_run_determinism():
    scene = _scene(seed=3)
    cfg = PipelineConfig(use_octree=True, use_caps=True, late_devox=True,
                         min_points=10)
    a, _ = run(scene, cfg)
    b, _ = run(scene, cfg)
    _props_equal(a, b)


def test_proposal_ordering_canonical():
    scene = _scene(seed=4)
    props, _ = run(scene, PipelineConfig())
    keys = [(p.class_id, int(p.point_indices[0])) for p in props]
    assert keys == sorted(keys)


def test_caps_r_eff_logged_and_floored_at_radius():
    scene = _scene(seed=5)
    cfg = PipelineConfig(use_caps=True, min_points=5,
                         caps_thresholds=(100.0, float("inf")),
                         caps_base_voxel=0.05, radius=0.04)
    props, timings = run(scene, cfg)
    assert timings.r_eff_log
    for c, r_eff in timings.r_eff_log.items():
        assert r_eff >= cfg.radius
        # every class here exceeds 100 points -> level 2 -> 0.10 m
        assert np.isclose(r_eff, 0.10)


def test_late_devox_identity_on_per_voxel_constant_scene():
    # points duplicated at their own voxel centroids: pooling is lossless,
    # so element-level and point-level runs must agree proposal-for-proposal
    rng = np.random.default_rng(6)
    base = rng.uniform(0, 1, (200, 3)).astype(np.float32)
    voxel = 0.02
    keys = np.floor(base.astype(np.float64) / voxel)
    centroids = ((keys + 0.5) * voxel).astype(np.float32)
    # 3 copies of every centroid
    pos = np.repeat(centroids, 3, axis=0)
    sco = np.repeat(rng.uniform(0.3, 0.9, (200, 2)).astype(np.float32), 3, axis=0)
    off = np.zeros_like(pos)
    from pcgroup.core import Scene
    scene = Scene(pos, sco, off)
    cfg_pt = PipelineConfig(min_points=1, radius=0.05, input_voxel=voxel)
    cfg_vx = PipelineConfig(min_points=1, radius=0.05, input_voxel=voxel,
                            late_devox=True)
    a, _ = run(scene, cfg_pt)
    b, _ = run(scene, cfg_vx)
    _props_equal(a, b)


def test_min_points_filter():
    scene = _scene(seed=7)
    small, _ = run(scene, PipelineConfig(min_points=1))
    large, _ = run(scene, PipelineConfig(min_points=10 ** 6))
    assert len(small) >= len(large)
    assert len(large) == 0
    for p in small:
        assert len(p.point_indices) >= 1


def test_empty_scene():
    from pcgroup.core import Scene
    scene = Scene(np.zeros((0, 3), np.float32), np.zeros((0, 3), np.float32),
                  np.zeros((0, 3), np.float32))
    props, timings = run(scene, PipelineConfig())
    assert len(props) == 0
    assert timings.total >= 0


def test_back_fuse_confidence_order():
    labels = np.full(10, -1)
    from pcgroup.grouping import InstanceProposal, ProposalSet
    props = ProposalSet([
        InstanceProposal(0, np.arange(0, 6), 0.9),
        InstanceProposal(1, np.arange(4, 10), 0.5),
    ])
    fused = back_fuse(labels, props)
    # overlap [4, 6) goes to the more confident class-0 proposal
    assert fused.tolist() == [0] * 6 + [1] * 4
    assert labels.tolist() == [-1] * 10   # input untouched


def test_proposals_to_boxes():
    scene = _scene(seed=8)
    props, _ = run(scene, PipelineConfig())
    boxes = proposals_to_boxes(props, scene.positions)
    assert len(boxes) == len(props)
    for (cls, box, conf), p in zip(boxes, props):
        assert cls == p.class_id and conf == p.confidence
        pts = scene.positions[p.point_indices]
        assert np.all(pts >= box.min - 1e-6) and np.all(pts <= box.max + 1e-6)


def test_run_report_is_json_serializable():
    scene = _scene(seed=9)
    cfg = PipelineConfig(use_caps=True, min_points=5)
    props, timings = run(scene, cfg)
    report = run_report(scene, cfg, props, timings)
    blob = json.dumps(report)
    back = json.loads(blob)
    assert back["report_version"] == 1
    assert back["n_points"] == scene.n_points
    assert back["n_proposals"] == len(props)
    assert set(back["timings"]) == {"point_wise", "knn", "grouping",
                                    "top_down", "total"}
    assert back["config"]["caps_thresholds"][-1] == "inf"
    assert len(back["r_eff"]) == len(timings.r_eff_log)
