import dataclasses
from pathlib import Path

import numpy as np
import pytest

from dynakey.dataset import FrameSequence, load_sequence, parse_trajectory
from dynakey.errors import InvalidConfig
from dynakey.scene import (
    ActorConfig,
    CarriedConfig,
    LandmarkConfig,
    NoiseConfig,
    SceneConfig,
    Waypoint,
    benchmark_config,
    config_from_dict,
    config_to_dict,
    entity_kinds,
    export_scene,
    generate_scene,
    load_config,
    oim_config,
)

from oracles import pinhole

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def small(**kw):
    base = dict(name="t", seed=5, frames=6, landmarks=LandmarkConfig(count=80))
    base.update(kw)
    return SceneConfig(**base)


def frames_equal(a, b, pose_tol=0.0):
    assert len(a.frames) == len(b.frames)
    for fa, fb in zip(a.frames, b.frames):
        assert fa.timestamp == fb.timestamp
        for col in ("u", "v", "z", "match", "point_id", "label"):
            np.testing.assert_array_equal(getattr(fa.keypoints, col), getattr(fb.keypoints, col))
        np.testing.assert_array_equal(fa.mask.ids, fb.mask.ids)
        np.testing.assert_array_equal(fa.depth, fb.depth)
        np.testing.assert_allclose(fa.pose.matrix, fb.pose.matrix, atol=pose_tol, rtol=0)


def test_static_scene_is_all_static():
    seq = generate_scene(small())
    assert all((f.keypoints.label == 0).all() for f in seq.frames)
    assert all(not f.mask.bits.any() for f in seq.frames)


def test_generation_is_deterministic():
    cfg = small(actors=[ActorConfig(path=[(-0.5, 0, 2.5), (0.5, 0, 2.5)])],
                noise=NoiseConfig(pixel_sigma=0.5, outlier_rate=0.2, depth_sigma=0.02))
    frames_equal(generate_scene(cfg), generate_scene(cfg))
    other = generate_scene(dataclasses.replace(cfg, seed=6))
    assert not np.array_equal(other.frames[0].keypoints.u, generate_scene(cfg).frames[0].keypoints.u)


def test_actor_mask_follows_projection():
    cfg = small(frames=8, actors=[ActorConfig(path=[(-4.0, 0, 3.0), (4.0, 0, 3.0)])])
    seq = generate_scene(cfg)
    K = cfg.camera.intrinsics.matrix
    for f, c in zip(seq.frames, np.linspace(-4.0, 4.0, cfg.frames)):
        (uv,), _ = pinhole(K, f.pose.R, f.pose.t, np.array([c, 0.0, 3.0]))
        visible = 0 <= uv[0] < cfg.camera.width and 0 <= uv[1] < cfg.camera.height
        if visible:
            assert f.mask.bits.sum() > 0
            assert f.mask.ids[int(round(uv[1])), int(round(uv[0]))] == 1
    assert any(not f.mask.bits.any() for f in seq.frames)


def test_carried_object_punches_mask():
    cfg = small(actors=[ActorConfig(path=[(0.0, 0.0, 2.5), (0.05, 0.0, 2.5)], points=10,
                                    carried=[CarriedConfig(offset=(0.0, 0.0), size=(0.2, 0.2), points=5)])])
    seq = generate_scene(cfg)
    f = seq.frames[0]
    cx, cy = cfg.camera.cx, cfg.camera.cy
    assert f.mask.ids[int(cy), int(cx)] == 0  # object in front of the torso
    assert f.mask.ids[int(cy) + 60, int(cx)] == 1
    kinds = entity_kinds(cfg)
    assert (kinds == 2).sum() == 5
    carried_ids = np.flatnonzero(kinds == 2)
    k = seq.frames[1].keypoints
    sel = np.isin(k.point_id, carried_ids)
    assert sel.any() and (k.label[sel] == 1).all()
    # a parked actor and its object are static
    still = generate_scene(small(actors=[dataclasses.replace(cfg.actors[0], path=[(0.0, 0.0, 2.5)])]))
    assert (still.frames[1].keypoints.label == 0).all()


def test_export_then_ingest_roundtrip(tmp_path):
    cfg = small(actors=[ActorConfig(path=[(-0.4, 0, 2.5), (0.4, 0, 2.5)])],
                noise=NoiseConfig(pixel_sigma=0.3, outlier_rate=0.1, depth_sigma=0.01))
    seq = generate_scene(cfg)
    export_scene(seq, tmp_path / "s")
    back = load_sequence(tmp_path / "s")
    frames_equal(seq, back, pose_tol=1e-6)
    assert back.intrinsics == seq.intrinsics
    gt = parse_trajectory(tmp_path / "s" / "groundtruth.txt")
    assert len(gt) == cfg.frames


def test_export_is_byte_identical(tmp_path):
    cfg = small(actors=[ActorConfig(path=[(0, 0, 2.5)])])
    export_scene(generate_scene(cfg), tmp_path / "a")
    export_scene(generate_scene(cfg), tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_export_empty_sequence(tmp_path):
    seq = generate_scene(small())
    with pytest.raises(InvalidConfig):
        export_scene(FrameSequence(seq.intrinsics, 640, 480, []), tmp_path / "x")


@pytest.mark.parametrize("patch, field", [
    ({"frames": 1}, "frames"),
    ({"noise": {"outlier_rate": 2.0}}, "noise.outlier_rate"),
    ({"landmarks": {"cout": 3}}, "landmarks"),
    ({"actors": [{"shape": "cube"}]}, "actors[0].shape"),
    ({"bogus": 1}, "bogus"),
    ({"frames": "ten"}, "frames"),
])
def test_config_errors_name_the_field(patch, field):
    data = {"schema_version": 1, **patch}
    with pytest.raises(InvalidConfig) as err:
        config_from_dict(data)
    assert field in str(err.value)


def test_schema_version_required():
    with pytest.raises(InvalidConfig, match="schema_version"):
        config_from_dict({"frames": 3})
    with pytest.raises(InvalidConfig, match="schema_version"):
        config_from_dict({"schema_version": 9})


def test_bundled_configs_match_builders():
    assert config_to_dict(load_config(CONFIGS / "benchmark.toml")) == config_to_dict(benchmark_config())
    assert config_to_dict(load_config(CONFIGS / "carried.toml")) == config_to_dict(oim_config())
    for p in CONFIGS.glob("*.toml"):
        if p.name != "run.toml":
            load_config(p)


def test_config_dict_roundtrip():
    cfg = benchmark_config()
    assert config_to_dict(config_from_dict(config_to_dict(cfg))) == config_to_dict(cfg)


def test_benchmark_scene_shape(bench):
    kinds = entity_kinds(benchmark_config())
    assert (kinds == 0).sum() == 300 and (kinds == 1).sum() == 40
    outl = np.concatenate([f.outliers for f in bench.frames[1:] if f.outliers is not None])
    assert 0.05 < outl.mean() < 0.15
