"""Scene/result serialization and the command-line front end.

Binary scene format (.sgpc), all integers little-endian:

    magic  4 bytes  b"SGPC"
    u32    format version (1)
    u32    flags: 1=colors, 2=gt labels, 4=scores, 8=offsets
    u64    N (points)
    u32    C (classes)
    then, in order, the arrays indicated by the flags:
    positions (N,3) f32; colors (N,3) f32; scores (N,C) f32;
    offsets (N,3) f32; gt_semantic (N,) i32; gt_instance (N,) i32

A whitespace-delimited text variant (*.txt) carries the same payload for
hand-written fixtures.  Proposal sets (.sgpr) are JSON.
"""

import argparse
import csv
import json
import math
import os
import struct
import sys
import time

import numpy as np

from . import metrics as M
from ._kernels import COMPILED, pykern, kern
from .core import Scene
from .errors import (FormatError, GenerationError, InvalidArgumentError,
                     InvalidDataError)
from .grouping import InstanceProposal, ProposalSet
from .knn import auto_levels, batch_octree_knn, build_adjacency, vanilla_radius_knn
from .octree import build_octree, child_index, data_index, level_offset
from .pipeline import PRESETS, PipelineConfig, run, run_report
from .synth import SynthSpec, corrupt_offsets, corrupt_scores, generate_scene

__all__ = ["read_scene", "write_scene", "read_proposals", "write_proposals",
           "bench_knn", "bench_kernel_engines", "uniform_points",
           "radius_for_neighbors", "selftest", "main"]

_MAGIC = b"SGPC"
_VERSION = 1
F_COLORS, F_GT, F_SCORES, F_OFFSETS = 1, 2, 4, 8


# ---------------------------------------------------------------------------
# scene files


def _atomic_write(path, writer):
    tmp = "%s.tmp.%d" % (path, os.getpid())
    try:
        with open(tmp, "wb") as fh:
            writer(fh)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_scene(scene, path):
    """Serialize a scene; *.txt selects the text variant."""
    if str(path).endswith(".txt"):
        return _write_scene_text(scene, path)
    flags = F_SCORES | F_OFFSETS
    if scene.gt_semantic is not None and scene.gt_instance is not None:
        flags |= F_GT

    def writer(fh):
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIQI", _VERSION, flags, scene.n_points,
                             scene.n_classes))
        fh.write(np.ascontiguousarray(scene.positions, "<f4").tobytes())
        fh.write(np.ascontiguousarray(scene.semantic_scores, "<f4").tobytes())
        fh.write(np.ascontiguousarray(scene.offsets, "<f4").tobytes())
        if flags & F_GT:
            fh.write(np.ascontiguousarray(scene.gt_semantic, "<i4").tobytes())
            fh.write(np.ascontiguousarray(scene.gt_instance, "<i4").tobytes())

    _atomic_write(path, writer)


def _read_exact(fh, nbytes, what):
    data = fh.read(nbytes)
    if len(data) != nbytes:
        raise FormatError("truncated %s: wanted %d bytes, got %d"
                          % (what, nbytes, len(data)), offset=fh.tell() - len(data))
    return data


def _read_array(fh, dtype, shape, what):
    n = int(np.prod(shape, dtype=np.int64))
    raw = _read_exact(fh, n * np.dtype(dtype).itemsize, what)
    return np.frombuffer(raw, dtype=dtype).reshape(shape)


def read_scene(path):
    if str(path).endswith(".txt"):
        return _read_scene_text(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FormatError("bad magic %r" % (magic,), offset=0)
        header = _read_exact(fh, struct.calcsize("<IIQI"), "header")
        version, flags, n, c = struct.unpack("<IIQI", header)
        if version != _VERSION:
            raise FormatError("unsupported version %d" % version, offset=4)
        positions = _read_array(fh, "<f4", (n, 3), "positions")
        if flags & F_COLORS:
            _read_array(fh, "<f4", (n, 3), "colors")  # accepted, not retained
        if flags & F_SCORES:
            scores = _read_array(fh, "<f4", (n, c), "scores")
        else:
            scores = np.zeros((n, c), np.float32)
        if flags & F_OFFSETS:
            offsets = _read_array(fh, "<f4", (n, 3), "offsets")
        else:
            offsets = np.zeros((n, 3), np.float32)
        gts = gti = None
        if flags & F_GT:
            gts = _read_array(fh, "<i4", (n,), "gt_semantic")
            gti = _read_array(fh, "<i4", (n,), "gt_instance")
        trailing = fh.read(1)
        if trailing:
            raise FormatError("trailing bytes after payload", offset=fh.tell() - 1)
    return Scene(positions.copy(), scores.copy(), offsets.copy(),
                 None if gts is None else gts.copy(),
                 None if gti is None else gti.copy())


def _fmt_f32(x):
    return np.format_float_positional(np.float32(x), unique=True, trim="0")


def _write_scene_text(scene, path):
    has_gt = scene.gt_semantic is not None and scene.gt_instance is not None
    flags = F_SCORES | F_OFFSETS | (F_GT if has_gt else 0)

    def writer(fh):
        out = ["SGPC-TEXT %d %d %d %d\n" % (_VERSION, scene.n_points,
                                            scene.n_classes, flags)]
        for i in range(scene.n_points):
            cols = [_fmt_f32(v) for v in scene.positions[i]]
            cols += [_fmt_f32(v) for v in scene.semantic_scores[i]]
            cols += [_fmt_f32(v) for v in scene.offsets[i]]
            if has_gt:
                cols += [str(int(scene.gt_semantic[i])),
                         str(int(scene.gt_instance[i]))]
            out.append(" ".join(cols) + "\n")
        fh.write("".join(out).encode())

    _atomic_write(path, writer)


def _read_scene_text(path):
    with open(path, "r") as fh:
        head = fh.readline().split()
        if len(head) != 5 or head[0] != "SGPC-TEXT":
            raise FormatError("bad text header", offset=0)
        version, n, c, flags = (int(x) for x in head[1:])
        if version != _VERSION:
            raise FormatError("unsupported version %d" % version)
        has_gt = bool(flags & F_GT)
        width = 3 + c + 3 + (2 if has_gt else 0)
        rows = []
        for ln, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            cols = line.split()
            if len(cols) != width:
                raise FormatError("line %d: expected %d columns, got %d"
                                  % (ln, width, len(cols)))
            rows.append(cols)
        if len(rows) != n:
            raise FormatError("expected %d rows, got %d" % (n, len(rows)))
    if not rows:
        return Scene(np.zeros((0, 3), np.float32), np.zeros((0, c), np.float32),
                     np.zeros((0, 3), np.float32))
    arr = np.asarray(rows)
    positions = arr[:, 0:3].astype(np.float32)
    scores = arr[:, 3:3 + c].astype(np.float32)
    offsets = arr[:, 3 + c:6 + c].astype(np.float32)
    gts = gti = None
    if has_gt:
        gts = arr[:, 6 + c].astype(np.int32)
        gti = arr[:, 7 + c].astype(np.int32)
    return Scene(positions, scores, offsets, gts, gti)


# ---------------------------------------------------------------------------
# proposal files


def write_proposals(proposals, path):
    payload = {
        "format": "sgpr", "version": _VERSION,
        "proposals": [
            {"class_id": int(p.class_id), "confidence": float(p.confidence),
             "point_indices": np.asarray(p.point_indices).tolist()}
            for p in proposals
        ],
    }
    _atomic_write(path, lambda fh: fh.write(json.dumps(payload).encode()))


def read_proposals(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError("proposal file is not valid JSON: %s" % e) from e
    if payload.get("format") != "sgpr":
        raise FormatError("not a proposal file")
    props = [InstanceProposal(int(p["class_id"]),
                              np.asarray(p["point_indices"], np.int64),
                              float(p["confidence"]))
             for p in payload.get("proposals", [])]
    return ProposalSet(props)


# ---------------------------------------------------------------------------
# benchmark harness


def uniform_points(n, density=1.0e6, seed=0):
    """n uniform points in a cube sized to keep `density` points per m^3."""
    side = (n / density) ** (1.0 / 3.0)
    rng = np.random.default_rng(seed)
    return (rng.random((n, 3)) * side).astype(np.float32)


def radius_for_neighbors(density, neighbors=16.0):
    """Ball radius holding `neighbors` expected points at uniform density."""
    return (3.0 * neighbors / (4.0 * math.pi * density)) ** (1.0 / 3.0)


def bench_knn(sizes, repeats=5, k=32, backends=("vanilla", "octree"),
              density=1.0e6, seed=0, progress=None):
    """Time self-adjacency construction per backend and size.

    Returns a list of row dicts: n_points, backend, run, build_s, query_s,
    total_s.  Sizes are benchmarked in ascending order; the octree depth is
    chosen per size for ~64 points per leaf.
    """
    rows = []
    r = radius_for_neighbors(density)
    for n in sorted(int(s) for s in sizes):
        pts = uniform_points(n, density, seed)
        exclude = np.arange(n, dtype=np.int64)
        for backend in backends:
            for rep in range(repeats):
                if backend == "vanilla":
                    t0 = time.perf_counter()
                    vanilla_radius_knn(pts, pts, k, r, exclude=exclude)
                    t1 = time.perf_counter()
                    build_s, query_s = 0.0, t1 - t0
                elif backend == "octree":
                    t0 = time.perf_counter()
                    tree = build_octree(pts, auto_levels(n))
                    t1 = time.perf_counter()
                    batch_octree_knn(tree, pts, k, r, exclude=exclude)
                    t2 = time.perf_counter()
                    build_s, query_s = t1 - t0, t2 - t1
                else:
                    raise InvalidArgumentError("unknown backend %r" % (backend,))
                row = {"n_points": n, "backend": backend, "run": rep,
                       "build_s": build_s, "query_s": query_s,
                       "total_s": build_s + query_s}
                rows.append(row)
                if progress:
                    progress(row)
    return rows


def bench_kernel_engines(n=20000, repeats=3, k=32, density=1.0e6, seed=0):
    """Compare the compiled kernel against the numpy fallback (brute force)."""
    pts = uniform_points(n, density, seed)
    ptsT = np.ascontiguousarray(pts.T)
    r = radius_for_neighbors(density)
    r2 = np.float32(np.float32(r) * np.float32(r))
    exclude = np.arange(n, dtype=np.int64)
    engines = [("compiled", kern)] if COMPILED else []
    engines.append(("python", pykern))
    rows = []
    for name, mod in engines:
        for rep in range(repeats):
            t0 = time.perf_counter()
            mod.brute_knn(ptsT, pts, k, r2, exclude, 1)
            dt = time.perf_counter() - t0
            rows.append({"n_points": n, "backend": "vanilla", "engine": name,
                         "run": rep, "total_s": dt,
                         "ns_per_pair": dt / n / n * 1e9})
    return rows


def write_bench_csv(rows, path):
    cols = sorted({k for row in rows for k in row})
    lead = [c for c in ("n_points", "backend", "engine", "run") if c in cols]
    cols = lead + [c for c in cols if c not in lead]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(rows)


# ---------------------------------------------------------------------------
# selftest


def selftest(verbose=True):
    """Oracle-equivalence and index-arithmetic checks; True when all pass."""
    ok = True

    def check(name, cond):
        nonlocal ok
        ok = ok and bool(cond)
        if verbose:
            print("%-44s %s" % (name, "ok" if cond else "FAIL"))

    # index arithmetic vs explicit breadth-first enumeration
    for d in (2, 3):
        nchild = 1 << d
        for levels in (1, 2, 3):
            nodes_by_level = [[0]]
            for _ in range(levels):
                nodes_by_level.append(
                    [child_index(i, j, d) for i in nodes_by_level[-1]
                     for j in range(1, nchild + 1)])
            flat = [i for lvl in nodes_by_level for i in lvl]
            check("bfs enumeration d=%d M=%d" % (d, levels),
                  flat == list(range(level_offset(levels + 1, d))))
            leaves = nodes_by_level[-1]
            check("leaf data indices d=%d M=%d" % (d, levels),
                  [data_index(i, levels, d) for i in leaves]
                  == list(range(len(leaves))))

    # octree vs brute-force equivalence on random scenes
    rng = np.random.default_rng(1234)
    for trial in range(8):
        d = 2 + trial % 2
        n = int(rng.integers(50, 800))
        pts = rng.random((n, d)).astype(np.float32)
        tree = build_octree(pts, levels=int(rng.integers(1, 4)))
        q = rng.random((64, d)).astype(np.float32)
        a = batch_octree_knn(tree, q, 8, 0.15)
        b = vanilla_radius_knn(pts, q, 8, 0.15)
        same = (np.array_equal(a.indptr, b.indptr)
                and np.array_equal(a.indices, b.indices)
                and np.allclose(a.distances, b.distances, atol=1e-9, rtol=0))
        check("octree == brute (trial %d, d=%d, n=%d)" % (trial, d, n), same)
    return ok


# ---------------------------------------------------------------------------
# CLI


def _flag(value):
    if value in ("on", "true", "1"):
        return True
    if value in ("off", "false", "0"):
        return False
    raise argparse.ArgumentTypeError("expected on|off")


def _build_parser():
    ap = argparse.ArgumentParser(prog="pcgroup",
                                 description="point-cloud instance grouping toolkit")
    ap.add_argument("--threads", type=int, default=None,
                    help="thread count for batch queries (default: "
                         "PCGROUP_THREADS or 1)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--instances", type=int, default=12)
    p.add_argument("--points", default="600,1200",
                   help="points per instance: lo,hi")
    p.add_argument("--confusion", type=float, default=0.0)
    p.add_argument("--offset-sigma", type=float, default=0.0)
    p.add_argument("--background", type=int, default=1000)
    p.add_argument("--shape", choices=("gaussian", "cuboid"), default="gaussian")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("run", help="run the grouping pipeline on a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--min-points", type=int, default=None)
    p.add_argument("--octree", type=_flag, default=False)
    p.add_argument("--caps", type=_flag, default=False)
    p.add_argument("--late-devox", type=_flag, default=False)
    p.add_argument("-o", "--output", default=None, help="JSON report path")
    p.add_argument("--proposals", default=None, help="proposal output path (.sgpr)")

    p = sub.add_parser("bench", help="benchmark k-NN backends")
    p.add_argument("--sizes", default="1e4,2e4",
                   help="comma-separated point counts, e.g. 1e5,1e6")
    p.add_argument("--backend", choices=("vanilla", "octree", "both"),
                   default="both")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--compare-kernels", action="store_true",
                   help="also compare compiled vs numpy kernel engines")
    p.add_argument("-o", "--output", required=True, help="CSV output path")

    p = sub.add_parser("eval", help="evaluate proposals against scene gt")
    p.add_argument("--scene", required=True)
    p.add_argument("--proposals", required=True)
    p.add_argument("-o", "--output", default=None, help="JSON metrics path")

    sub.add_parser("selftest", help="oracle-equivalence and index checks")
    return ap


def _cmd_synth(args):
    lo, hi = (int(float(x)) for x in args.points.split(","))
    spec = SynthSpec(n_classes=args.classes, n_instances=args.instances,
                     points_per_instance=(lo, hi), blob_shape=args.shape,
                     confusion_rate=args.confusion,
                     offset_sigma=args.offset_sigma,
                     n_background=args.background, seed=args.seed)
    scene = generate_scene(spec)
    if spec.confusion_rate > 0:
        scene = corrupt_scores(scene, spec)
    if spec.offset_sigma > 0:
        scene = corrupt_offsets(scene, spec.offset_sigma, seed=spec.seed)
    write_scene(scene, args.output)
    print("wrote %s: %d points, %d classes" % (args.output, scene.n_points,
                                               scene.n_classes))
    return 0


def _cmd_run(args):
    scene = read_scene(args.scene)
    overrides = dict(use_octree=args.octree, use_caps=args.caps,
                     late_devox=args.late_devox)
    if args.tau is not None:
        overrides["tau"] = args.tau
    if args.radius is not None:
        overrides["radius"] = args.radius
    if args.min_points is not None:
        overrides["min_points"] = args.min_points
    if args.preset:
        config = PipelineConfig.from_preset(args.preset, **overrides)
    else:
        config = PipelineConfig(**overrides)
    props, timings = run(scene, config)
    report = run_report(scene, config, props, timings)
    if args.preset:
        report["preset"] = {"name": args.preset,
                            "voxel_size": PRESETS[args.preset][0],
                            "bandwidth": PRESETS[args.preset][1]}
    text = json.dumps(report, indent=2)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        print(text)
    if args.proposals:
        write_proposals(props, args.proposals)
    return 0


def _cmd_bench(args):
    sizes = [int(float(s)) for s in args.sizes.split(",")]
    backends = ("vanilla", "octree") if args.backend == "both" else (args.backend,)
    rows = bench_knn(sizes, repeats=args.repeats, k=args.k, backends=backends)
    if args.compare_kernels:
        rows += bench_kernel_engines(min(min(sizes), 20000))
    write_bench_csv(rows, args.output)
    print("wrote %s (%d rows)" % (args.output, len(rows)))
    return 0


def _cmd_eval(args):
    scene = read_scene(args.scene)
    props = read_proposals(args.proposals)
    gt = M.gt_instances_from_scene(scene)
    ap = M.average_precision(props, gt)
    prec, rec = M.matching_precision_recall(props, gt, 0.5)
    report = {"report_version": 1, "n_proposals": len(props),
              "n_gt_instances": len(gt),
              "ap": ap.ap, "ap50": ap.ap50, "ap25": ap.ap25,
              "mprec50": prec, "mrec50": rec}
    text = json.dumps(report, indent=2)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        print(text)
    return 0


def main(argv=None):
    ap = _build_parser()
    args = ap.parse_args(argv)
    if args.threads is not None:
        os.environ["PCGROUP_THREADS"] = str(max(1, args.threads))
    try:
        if args.cmd == "synth":
            return _cmd_synth(args)
        if args.cmd == "run":
            return _cmd_run(args)
        if args.cmd == "bench":
            return _cmd_bench(args)
        if args.cmd == "eval":
            return _cmd_eval(args)
        if args.cmd == "selftest":
            return 0 if selftest() else 1
    except (InvalidArgumentError, InvalidDataError, GenerationError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    except FormatError as e:
        print("format error: %s" % e, file=sys.stderr)
        return 3
    except FileNotFoundError as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
