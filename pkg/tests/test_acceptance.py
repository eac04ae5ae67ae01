"""Acceptance criteria, one test each; every test records a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from dynakey import cli
from dynakey.dataset import load_depth, load_sequence, parse_trajectory, write_trajectory, StampedPose
from dynakey.evaluation import ate_rmse, improvement_rate, rpe
from dynakey.geometry import PoseSE3, fundamental_from_poses, reprojection_errors
from dynakey.masks import MaskImage, build_distance_field, semantic_moving_probability
from dynakey.motion import FusedObservation, FusionRule, Source, State, bayes_update, geometric_moving_probability
from dynakey.oim import DynamicNeighbor, build_interaction_zone, delta_threshold, find_supporting_dynamics, weighted_centroid
from dynakey.pipeline import RunParams, run_sequence, score
from dynakey.scene import LandmarkConfig, SceneConfig, Waypoint, entity_kinds, export_scene, generate_scene, oim_config

from conftest import benchmark_scene, oim_run, oim_scene, record
from oracles import bayes_iterate, brute_neighbors, brute_signed_distance, random_rotation

OIM_SEEDS = (7, 8, 9, 10, 11)


def test_c01_epipolar_soundness():
    t0 = time.perf_counter()
    cfg = SceneConfig(name="noiseless", seed=1, frames=50, landmarks=LandmarkConfig(count=200),
                      trajectory=[Waypoint((0, 0, 0)), Waypoint((0.4, -0.05, 0.2), (0.0, 0.0436, 0.0, 0.9990))])
    seq = generate_scene(cfg)
    worst = 0.0
    for prev, cur in zip(seq.frames, seq.frames[1:]):
        F = fundamental_from_poses(seq.intrinsics, prev.pose, cur.pose)
        k = cur.keypoints
        linked = k.match >= 0
        err = reprojection_errors(F, prev.keypoints.pixels[k.match[linked]], k.pixels[linked])
        worst = max(worst, float(np.max(err)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 5.0
    record(1, "epipolar soundness", ok, f"max error {worst:.2e} px, {elapsed:.2f} s")
    assert worst < 1e-9
    assert elapsed < 5.0


def test_c02_closed_forms():
    checks = []
    for z in (0.0, 3.0, 10.0):
        checks.append(abs(semantic_moving_probability(0.0, z).value - 0.5))
        b = min(max(0.05 + 0.02 * z, 0.05), 0.25)
        checks.append(abs(semantic_moving_probability(math.log(3) / b, z).value - 0.75))
    checks.append(abs(geometric_moving_probability(0.0, 0.0) - 0.0))
    checks.append(abs(geometric_moving_probability(0.3, 0.0, sigma=1.0) - (1 - math.exp(-0.045))))
    G = weighted_centroid([DynamicNeighbor((0.0, 0.0), 2.0, 0.0, 0.0, 0), DynamicNeighbor((10.0, 0.0), 2.35, 0.35, 10.0, 1)])
    checks.append(abs(G[0] - 10.0 * 0.5 / 1.5))
    checks.append(abs(G[1]))
    worst = max(checks)
    record(2, "closed-form suite", worst <= 1e-12, f"max deviation {worst:.1e}")
    assert worst <= 1e-12


def test_c03_bayes_filter():
    obs = FusedObservation(0.9, FusionRule(Source.FUSED, 0.5))
    bel, path = 0.1, []
    for _ in range(3):
        bel = bayes_update(bel, obs, 0.1)
        path.append(bel)
    oracle = bayes_iterate(0.1, 0.9, 0.1, 3)
    reached = max(path) > 0.8 and max(oracle) > 0.8 and np.allclose(path, oracle, atol=1e-15)
    rng = np.random.default_rng(2024)
    triples = rng.random((10_000, 3))
    violations = 0
    for a, b, p in triples:
        lo, hi = min(a, b), max(a, b)
        o = FusedObservation(float(p), FusionRule(Source.FUSED, 0.5))
        if bayes_update(lo, o, 0.1) > bayes_update(hi, o, 0.1):
            violations += 1
    ok = reached and violations == 0
    record(3, "Bayes filter", ok, f"bel after 3 updates {path[-1]:.4f}, {violations} monotonicity violations")
    assert reached and violations == 0


def test_c04_benchmark_accuracy():
    benchmark_scene.cache_clear()
    t0 = time.perf_counter()
    seq = benchmark_scene(42)
    frames = run_sequence(seq, RunParams(seed=42))
    elapsed = time.perf_counter() - t0
    rep = score(seq, frames)
    pts, obs = rep["points"], rep["observations"]
    ok = pts["precision"] >= 0.9 and pts["recall"] >= 0.9 and elapsed < 30
    record(4, "benchmark classification", ok,
           f"point precision {pts['precision']:.3f} recall {pts['recall']:.3f}; "
           f"observation precision {obs['precision']:.3f} recall {obs['recall']:.3f}; {elapsed:.1f} s")
    assert pts["precision"] >= 0.9 and pts["recall"] >= 0.9
    assert elapsed < 30


def _carried_recall(use_oim):
    hit = total = 0
    for seed in OIM_SEEDS:
        seq, frames = oim_scene(seed), oim_run(seed, use_oim)
        carried = np.flatnonzero(entity_kinds(oim_config(seed)) == 2)
        for f, fr in zip(seq.frames[1:], frames[1:]):
            zone = build_interaction_zone(f.mask, f.depth)
            for r in fr.results:
                o = r.observation
                if f.keypoints.point_id[r.index] not in carried or o.in_mask or o.depth is None:
                    continue
                if not zone.contains(o.pixel, o.depth):
                    continue
                total += 1
                hit += r.state.state is State.DYNAMIC
    return hit / total, total


def test_c05_oim_efficacy():
    with_oim, n = _carried_recall(True)
    without, _ = _carried_recall(False)
    ok = with_oim >= 0.8 and without <= 0.2
    record(5, "OIM efficacy", ok, f"carried-object recall {with_oim:.3f} with OIM, {without:.3f} without, {n} observations")
    assert n > 0
    assert with_oim >= 0.8 and without <= 0.2


def test_c06_neighbor_oracle():
    mismatches = 0
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        n = int(rng.integers(0, 100))
        pix = rng.uniform(0, 160, size=(n, 2))
        dep = rng.uniform(0.5, 6.0, size=n)
        dep[rng.random(n) < 0.05] = np.nan
        # plant exact-boundary neighbours to exercise the strict inequalities
        p, z = tuple(rng.uniform(20, 140, 2)), float(rng.uniform(0.5, 6.0))
        dyn = [(tuple(a), float(b)) for a, b in zip(pix, dep)]
        dyn.append(((p[0] + delta_threshold(z), p[1]), z))
        dyn.append((p, z + 0.7))
        got = [x.index for x in find_supporting_dynamics(p, z, dyn)]
        mismatches += got != brute_neighbors(p, z, dyn, delta_threshold(z), 0.7)
    record(6, "OIM neighbour oracle", mismatches == 0, f"{mismatches} mismatching instances of 100")
    assert mismatches == 0


def test_c07_metrics():
    rng = np.random.default_rng(77)
    n = 40
    pos = np.cumsum(rng.normal(scale=0.05, size=(n, 3)), axis=0)
    gt = [StampedPose.from_pose(0.1 * k, PoseSE3.from_rt(random_rotation(rng), pos[k])) for k in range(n)]
    same = ate_rmse(gt, gt)
    worst_inv = 0.0
    for _ in range(10):
        T = PoseSE3.from_rt(random_rotation(rng), rng.normal(scale=3, size=3))
        moved = [StampedPose.from_pose(p.timestamp, T @ p.pose) for p in gt]
        worst_inv = max(worst_inv, ate_rmse(moved, gt))
    line_gt = [StampedPose(0.0, (0.0, 0.0, 0.0), (0, 0, 0, 1.0)), StampedPose(0.1, (1.0, 0.0, 0.0), (0, 0, 0, 1.0))]
    line_est = [StampedPose(0.0, (0.0, 0.0, 0.0), (0, 0, 0, 1.0)), StampedPose(0.1, (2.0, 0.0, 0.0), (0, 0, 0, 1.0))]
    hand = ate_rmse(line_est, line_gt)
    s = math.sin(math.radians(5))
    rot_est = [line_gt[0], StampedPose(0.1, (1.0, 0.0, 0.0), (0.0, 0.0, s, math.cos(math.radians(5))))]
    rot = rpe(rot_est, line_gt)[1]
    r1, r2 = improvement_rate(0.1, 0.002), improvement_rate(0.1, 0.102)
    ok = same == 0.0 and worst_inv < 1e-9 and hand == 0.5 and abs(rot - 10.0) < 1e-9 and r1 == 98.0 and r2 == -2.0
    record(7, "trajectory metrics", ok,
           f"identical {same}, invariance {worst_inv:.1e}, hand ATE {hand}, RPE rot {rot:.12f}, rates {r1} / {r2}")
    assert same == 0.0 and worst_inv < 1e-9 and hand == 0.5
    assert abs(rot - 10.0) < 1e-9
    assert r1 == 98.0 and r2 == -2.0


def test_c08_distance_transform_oracle():
    rng = np.random.default_rng(8)
    bad = 0
    for k in range(50):
        h, w = (int(x) for x in rng.integers(1, 65, size=2))
        kind = k % 3
        if kind == 0:
            bits = rng.random((h, w)) < rng.uniform(0.05, 0.8)
        elif kind == 1:
            bits = np.zeros((h, w), bool)
            for _ in range(int(rng.integers(1, 4))):
                r0, c0 = rng.integers(0, h), rng.integers(0, w)
                bits[r0:r0 + int(rng.integers(1, 30)), c0:c0 + int(rng.integers(1, 30))] = True
        else:
            yy, xx = np.mgrid[:h, :w]
            cy, cx, rad = rng.uniform(0, h), rng.uniform(0, w), rng.uniform(1, 30)
            bits = (yy - cy) ** 2 + (xx - cx) ** 2 < rad ** 2
        field = build_distance_field(MaskImage.from_bits(bits))
        bad += not np.array_equal(field.signed, brute_signed_distance(bits))
    record(8, "distance-transform oracle", bad == 0, f"{bad} mismatching masks of 50")
    assert bad == 0


def test_c09_round_trips(tmp_path):
    rng = np.random.default_rng(9)
    poses = []
    for k in range(50):
        q = rng.normal(size=4)
        poses.append(StampedPose(round(1e9 + 0.033 * k, 6), tuple(rng.normal(scale=3, size=3)), tuple(q / np.linalg.norm(q))))
    write_trajectory(poses, tmp_path / "t.txt")
    back = parse_trajectory(tmp_path / "t.txt")
    traj_err = max(
        max(abs(a.timestamp - b.timestamp), *np.abs(np.subtract(a.translation, b.translation)),
            *np.abs(np.subtract(a.quaternion, b.quaternion)))
        for a, b in zip(poses, back)
    )
    seq = oim_scene(7)
    export_scene(seq, tmp_path / "scene")
    ing = load_sequence(tmp_path / "scene")
    exact = len(ing.frames) == len(seq.frames)
    pose_err = 0.0
    for a, b in zip(seq.frames, ing.frames):
        for col in ("u", "v", "z", "match", "point_id", "label"):
            exact &= np.array_equal(getattr(a.keypoints, col), getattr(b.keypoints, col))
        exact &= np.array_equal(a.mask.ids, b.mask.ids) and np.array_equal(a.depth, b.depth, equal_nan=True)
        pose_err = max(pose_err, float(np.abs(a.pose.matrix - b.pose.matrix).max()))
    from PIL import Image
    Image.fromarray(np.array([[5000]], dtype=np.uint16)).save(tmp_path / "d.png")
    depth_ok = load_depth(tmp_path / "d.png")[0, 0] == 1.0
    ok = traj_err <= 1e-6 and exact and pose_err <= 1e-6 and depth_ok
    record(9, "format round-trips", ok, f"trajectory {traj_err:.1e}, scene pixels exact={exact}, poses {pose_err:.1e}")
    assert traj_err <= 1e-6 and pose_err <= 1e-6
    assert exact and depth_ok


def test_c10_classify_determinism(tmp_path):
    export_scene(benchmark_scene(42), tmp_path / "bench")
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}.csv"
        assert cli.main(["classify", str(tmp_path / "bench"), str(out), "--seed", "42"]) == 0
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    record(10, "classify determinism", ok, f"{len(outs[0])} bytes per CSV")
    assert ok
