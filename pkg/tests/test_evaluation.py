import json
import math

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynakey.dataset import StampedPose
from dynakey.errors import InsufficientOverlap, ZeroBaseline
from dynakey.evaluation import (
    REPORT_SCHEMA,
    align_umeyama,
    ate_rmse,
    evaluate,
    format_table,
    improvement_rate,
    report_from_dict,
    rpe,
)
from dynakey.geometry import PoseSE3

from oracles import random_rotation


def traj(positions, rotations=None, t0=0.0, dt=0.1):
    out = []
    for k, p in enumerate(positions):
        R = np.eye(3) if rotations is None else rotations[k]
        pose = PoseSE3.from_rt(R, p)
        out.append(StampedPose.from_pose(t0 + k * dt, pose))
    return out


def transform(tr, R, t):
    return [StampedPose.from_pose(p.timestamp, PoseSE3.from_rt(R, t) @ p.pose) for p in tr]


def rz(deg):
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])


def random_traj(seed, n=25):
    rng = np.random.default_rng(seed)
    pos = np.cumsum(rng.normal(scale=0.1, size=(n, 3)), axis=0)
    rots = [random_rotation(rng) for _ in range(n)]
    return traj(pos, rots)


def test_umeyama_examples():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 3))
    al = align_umeyama(X, X)
    np.testing.assert_allclose(al.R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(al.t, 0, atol=1e-12)
    al = align_umeyama(X + [1, 2, 3], X)
    np.testing.assert_allclose(al.t, [-1, -2, -3], atol=1e-12)
    al = align_umeyama(X, X @ rz(30).T)
    np.testing.assert_allclose(al.R, rz(30), atol=1e-9)
    assert not al.degenerate


def test_umeyama_with_scale():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(15, 3))
    Y = 2.5 * X @ rz(-40).T + [0.3, 0, 1]
    al = align_umeyama(X, Y, with_scale=True)
    assert al.scale == pytest.approx(2.5, abs=1e-12)
    np.testing.assert_allclose(al.apply(X), Y, atol=1e-12)


def test_ate_examples():
    gt = random_traj(2)
    assert ate_rmse(gt, gt) == 0.0
    gt = traj([(0, 0, 0), (1, 0, 0)])
    est = traj([(0, 0, 0), (2, 0, 0)])
    assert ate_rmse(est, gt) == 0.5


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_ate_invariant_to_rigid_motion(seed):
    rng = np.random.default_rng(seed)
    gt = random_traj(seed % 1000)
    est = transform(gt, random_rotation(rng), rng.normal(scale=5, size=3))
    assert ate_rmse(est, gt) < 1e-9
    assert rpe(est, gt)[0] < 1e-9


def test_rpe_examples():
    gt = random_traj(3)
    assert rpe(gt, gt) == (0.0, 0.0)
    t, r = rpe(transform(gt, rz(70), (1, 2, 3)), gt, delta=2)
    assert t < 1e-9 and r < 1e-5
    gt = traj([(0, 0, 0), (1, 0, 0)])
    est = traj([(0, 0, 0), (1, 0, 0)], [np.eye(3), rz(10)])
    assert abs(rpe(est, gt)[1] - 10.0) < 1e-9


def test_improvement_rate_examples():
    assert improvement_rate(0.1, 0.002) == 98.0
    assert improvement_rate(0.1, 0.102) == -2.0
    assert improvement_rate(0.37, 0.37) == 0.0
    with pytest.raises(ZeroBaseline):
        improvement_rate(0.0, 0.1)


def test_insufficient_overlap():
    a = traj([(0, 0, 0), (1, 0, 0)], t0=0.0)
    b = traj([(0, 0, 0), (1, 0, 0)], t0=5.0)
    with pytest.raises(InsufficientOverlap):
        ate_rmse(a, b)
    with pytest.raises(InsufficientOverlap):
        rpe(a[:1], a[:1])


def test_collinear_alignment_is_flagged():
    al = align_umeyama([(0, 0, 0), (1, 0, 0), (2, 0, 0)], [(0, 0, 0), (0, 1, 0), (0, 2, 0)])
    assert al.degenerate
    np.testing.assert_allclose(al.apply([(2, 0, 0)]), [(0, 2, 0)], atol=1e-12)


def test_report_schema_and_table():
    gt = random_traj(4)
    rng = np.random.default_rng(4)
    noisy = [StampedPose(p.timestamp, tuple(np.add(p.translation, rng.normal(scale=0.01, size=3))), p.quaternion)
             for p in gt]
    worse = [StampedPose(p.timestamp, tuple(np.add(p.translation, rng.normal(scale=0.05, size=3))), p.quaternion)
             for p in gt]
    rep = evaluate(noisy, gt, worse, sequence="walking_xyz")
    doc = json.loads(rep.to_json())
    jsonschema.validate(doc, REPORT_SCHEMA)
    assert doc["improvement_vs_baseline"]["ate"] > 0
    assert doc["improvement_vs_baseline"]["rpe_trans"] > 0
    assert report_from_dict(doc).ate_rmse == rep.ate_rmse
    table = format_table([rep])
    assert "walking_xyz" in table and "%" in table
    bare = json.loads(evaluate(gt, gt).to_json())
    jsonschema.validate(bare, REPORT_SCHEMA)
    assert bare["ate_rmse"] == bare["rpe_trans_rmse"] == bare["rpe_rot_rmse"] == 0.0
