import json
import struct

import numpy as np
import pytest

from pcgroup.core import Scene
from pcgroup.errors import FormatError
from pcgroup.grouping import InstanceProposal, ProposalSet
from pcgroup.io_cli import (bench_kernel_engines, bench_knn, main,
                            radius_for_neighbors, read_proposals, read_scene,
                            selftest, uniform_points, write_bench_csv,
                            write_proposals, write_scene)
from pcgroup.synth import SynthSpec, generate_scene


def _scene(seed=0, gt=True):
    spec = SynthSpec(n_classes=3, n_instances=3, n_background=50,
                     points_per_instance=(40, 80), seed=seed)
    scene = generate_scene(spec)
    if gt:
        return scene
    return Scene(scene.positions, scene.semantic_scores, scene.offsets)


def _scenes_equal(a, b):
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.semantic_scores, b.semantic_scores)
    assert np.array_equal(a.offsets, b.offsets)
    if a.gt_semantic is None:
        assert b.gt_semantic is None and b.gt_instance is None
    else:
        assert np.array_equal(a.gt_semantic, b.gt_semantic)
        assert np.array_equal(a.gt_instance, b.gt_instance)


# --- scene roundtrips --------------------------------------------------------

@pytest.mark.parametrize("gt", [True, False])
def test_binary_roundtrip(tmp_path, gt):
    scene = _scene(gt=gt)
    path = tmp_path / "scene.sgpc"
    write_scene(scene, str(path))
    _scenes_equal(scene, read_scene(str(path)))


@pytest.mark.parametrize("gt", [True, False])
def test_text_roundtrip_is_float32_lossless(tmp_path, gt):
    scene = _scene(seed=1, gt=gt)
    path = tmp_path / "scene.txt"
    write_scene(scene, str(path))
    _scenes_equal(scene, read_scene(str(path)))


def test_empty_scene_roundtrip(tmp_path):
    scene = Scene(np.zeros((0, 3), np.float32), np.zeros((0, 2), np.float32),
                  np.zeros((0, 3), np.float32))
    for name in ("empty.sgpc", "empty.txt"):
        write_scene(scene, str(tmp_path / name))
        back = read_scene(str(tmp_path / name))
        assert back.n_points == 0 and back.n_classes == 2


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.sgpc"
    path.write_bytes(b"NOPE" + b"\x00" * 40)
    with pytest.raises(FormatError) as ei:
        read_scene(str(path))
    assert "offset 0" in str(ei.value)


def test_truncated_payload_names_array_and_offset(tmp_path):
    scene = _scene(seed=2)
    path = tmp_path / "trunc.sgpc"
    write_scene(scene, str(path))
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(FormatError) as ei:
        read_scene(str(path))
    msg = str(ei.value)
    assert "truncated" in msg and "offset" in msg


def test_trailing_bytes_rejected(tmp_path):
    scene = _scene(seed=3)
    path = tmp_path / "trail.sgpc"
    write_scene(scene, str(path))
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(FormatError):
        read_scene(str(path))


def test_unsupported_version(tmp_path):
    path = tmp_path / "v9.sgpc"
    path.write_bytes(b"SGPC" + struct.pack("<IIQI", 9, 0, 0, 1))
    with pytest.raises(FormatError):
        read_scene(str(path))


def test_text_column_mismatch(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("SGPC-TEXT 1 1 2 12\n0.0 0.0 0.0 0.5\n")
    with pytest.raises(FormatError) as ei:
        read_scene(str(path))
    assert "columns" in str(ei.value)


# --- proposal files ----------------------------------------------------------

def test_proposal_roundtrip(tmp_path):
    props = ProposalSet([
        InstanceProposal(0, np.array([3, 5, 9], np.int64), 0.75),
        InstanceProposal(2, np.arange(100, dtype=np.int64), 0.25),
    ])
    path = tmp_path / "props.sgpr"
    write_proposals(props, str(path))
    back = read_proposals(str(path))
    assert len(back) == 2
    for a, b in zip(props, back):
        assert a.class_id == b.class_id and a.confidence == b.confidence
        assert np.array_equal(a.point_indices, b.point_indices)


def test_proposal_file_errors(tmp_path):
    bad = tmp_path / "bad.sgpr"
    bad.write_text("{not json")
    with pytest.raises(FormatError):
        read_proposals(str(bad))
    bad.write_text(json.dumps({"format": "other"}))
    with pytest.raises(FormatError):
        read_proposals(str(bad))


# --- benchmark harness -------------------------------------------------------

def test_uniform_points_density_and_radius():
    pts = uniform_points(8000, density=1e6, seed=0)
    side = (8000 / 1e6) ** (1 / 3)
    assert pts.shape == (8000, 3)
    assert pts.min() >= 0 and pts.max() <= side
    r = radius_for_neighbors(1e6, 16)
    # expected points in the ball ~= 16
    expect = 1e6 * 4 / 3 * np.pi * r ** 3
    assert np.isclose(expect, 16.0)


def test_bench_knn_rows_schema():
    rows = bench_knn([500, 200], repeats=2)
    assert len(rows) == 2 * 2 * 2
    assert [r["n_points"] for r in rows] == [200] * 4 + [500] * 4
    for r in rows:
        assert set(r) == {"n_points", "backend", "run", "build_s", "query_s",
                          "total_s"}
        assert r["total_s"] == r["build_s"] + r["query_s"]
        if r["backend"] == "vanilla":
            assert r["build_s"] == 0.0


def test_bench_kernel_engines_rows():
    rows = bench_kernel_engines(n=2000, repeats=1)
    engines = {r["engine"] for r in rows}
    assert "python" in engines
    for r in rows:
        assert r["ns_per_pair"] > 0


def test_write_bench_csv(tmp_path):
    rows = bench_knn([300], repeats=1)
    path = tmp_path / "bench.csv"
    write_bench_csv(rows, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("n_points,backend")
    assert len(lines) == 1 + len(rows)


def test_selftest_passes():
    assert selftest(verbose=False)


# --- CLI ---------------------------------------------------------------------

def test_cli_synth_run_eval_roundtrip(tmp_path, capsys):
    scene_path = str(tmp_path / "scene.sgpc")
    assert main(["synth", "--seed", "5", "--classes", "3", "--instances", "3",
                 "--points", "200,300", "--background", "100",
                 "-o", scene_path]) == 0
    report_path = str(tmp_path / "report.json")
    props_path = str(tmp_path / "props.sgpr")
    assert main(["run", "--scene", scene_path, "--octree", "on",
                 "-o", report_path, "--proposals", props_path]) == 0
    report = json.loads(open(report_path).read())
    assert report["config"]["use_octree"] is True
    assert report["n_proposals"] == len(read_proposals(props_path))
    metrics_path = str(tmp_path / "metrics.json")
    assert main(["eval", "--scene", scene_path, "--proposals", props_path,
                 "-o", metrics_path]) == 0
    metrics = json.loads(open(metrics_path).read())
    assert metrics["ap50"] == 1.0
    assert metrics["mrec50"] == 1.0


def test_cli_run_preset_echoed_in_report(tmp_path):
    scene_path = str(tmp_path / "scene.sgpc")
    main(["synth", "--seed", "6", "--classes", "2", "--instances", "2",
          "--points", "100,150", "-o", scene_path])
    report_path = str(tmp_path / "report.json")
    assert main(["run", "--scene", scene_path, "--preset", "scannet",
                 "-o", report_path]) == 0
    report = json.loads(open(report_path).read())
    assert report["preset"] == {"name": "scannet", "voxel_size": 0.02,
                                "bandwidth": 0.04}
    assert report["config"]["radius"] == 0.04


def test_cli_bench_writes_csv(tmp_path):
    out = str(tmp_path / "bench.csv")
    assert main(["bench", "--sizes", "300,500", "--repeats", "1",
                 "-o", out]) == 0
    lines = open(out).read().strip().splitlines()
    assert len(lines) == 1 + 2 * 2


def test_cli_selftest(capsys):
    assert main(["selftest"]) == 0
    assert "ok" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    # missing scene file -> 2
    assert main(["run", "--scene", str(tmp_path / "missing.sgpc")]) == 2
    # malformed scene file -> 3
    bad = tmp_path / "bad.sgpc"
    bad.write_bytes(b"garbage")
    assert main(["run", "--scene", str(bad)]) == 3
    # invalid synth arguments -> 2
    assert main(["synth", "--points", "500,100",
                 "-o", str(tmp_path / "x.sgpc")]) == 2
    capsys.readouterr()
