"""Deterministic synthetic RGB-D scenes with ground-truth keypoint states.

The world frame matches the first camera: x right, y down, z forward.
Humans are planar boxes or ellipses facing the camera that move along
piecewise-linear paths; carried objects ride along in front of them and
punch a hole in the human mask where they occlude it.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage
from scipy.spatial.transform import Rotation, Slerp

from .dataset import Frame, FrameSequence, quantize_depth, save_sequence
from .errors import DatasetIOError, InvalidConfig
from .geometry import CameraIntrinsics, PoseSE3, project_many
from .masks import MaskImage
from .motion import Keypoints

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1
OCCLUSION_MARGIN = 0.1  # m

# rng stream ids
_LANDMARKS, _ACTORS, _PIXEL, _DEPTH_KP, _DEPTH_GRID, _OUTLIERS = range(6)


def _rng(seed, stream, *key):
    return np.random.default_rng([int(seed), stream, *[int(k) for k in key]])


# -- configuration ------------------------------------------------------------------

@dataclass
class CameraConfig:
    width: int = 640
    height: int = 480
    fx: float = 525.0
    fy: float = 525.0
    cx: float = 319.5
    cy: float = 239.5

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy)


@dataclass
class Waypoint:
    position: tuple = (0.0, 0.0, 0.0)
    rotation: tuple = (0.0, 0.0, 0.0, 1.0)  # qx qy qz qw


@dataclass
class LandmarkConfig:
    count: int = 200
    low: tuple = (-3.0, -2.0, 2.5)
    high: tuple = (3.0, 2.0, 6.0)


@dataclass
class NoiseConfig:
    pixel_sigma: float = 0.0
    outlier_rate: float = 0.0
    mask_offset: int = 0  # px; >0 dilates, <0 erodes
    depth_sigma: float = 0.0


@dataclass
class CarriedConfig:
    offset: tuple = (0.0, 0.0)  # m, in the actor plane
    depth_offset: float = -0.25  # m, negative = towards the camera
    size: tuple = (0.12, 0.12)
    points: int = 20
    tracked: bool = False
    occludes: bool = True


@dataclass
class ActorConfig:
    shape: str = "box"
    size: tuple = (0.5, 1.7)
    path: list = field(default_factory=lambda: [(0.0, 0.0, 3.0)])
    points: int = 20
    depth_jitter: float = 0.05
    carried: list = field(default_factory=list)


@dataclass
class SceneConfig:
    schema_version: int = SCHEMA_VERSION
    name: str = "scene"
    seed: int = 0
    frames: int = 30
    fps: float = 30.0
    start_time: float = 1000.0
    background_depth: float = 4.5
    camera: CameraConfig = field(default_factory=CameraConfig)
    trajectory: list = field(default_factory=lambda: [Waypoint(), Waypoint(position=(0.3, 0.0, 0.0))])
    landmarks: LandmarkConfig = field(default_factory=LandmarkConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    actors: list = field(default_factory=list)

    def validate(self):
        def bad(name, why):
            raise InvalidConfig(f"{name}: {why}")

        if self.schema_version != SCHEMA_VERSION:
            bad("schema_version", f"unsupported version {self.schema_version}, expected {SCHEMA_VERSION}")
        if self.frames < 2:
            bad("frames", "must be at least 2")
        if not self.fps > 0:
            bad("fps", "must be positive")
        if not self.background_depth > 0:
            bad("background_depth", "must be positive")
        c = self.camera
        if c.width <= 0 or c.height <= 0:
            bad("camera", "width and height must be positive")
        if not (c.fx > 0 and c.fy > 0):
            bad("camera", "focal lengths must be positive")
        if not self.trajectory:
            bad("trajectory", "needs at least one waypoint")
        for k, wp in enumerate(self.trajectory):
            if len(wp.position) != 3 or len(wp.rotation) != 4 or np.linalg.norm(wp.rotation) == 0:
                bad(f"trajectory[{k}]", "position needs 3 values and rotation a nonzero quaternion")
        lm = self.landmarks
        if lm.count < 0:
            bad("landmarks.count", "must be non-negative")
        if len(lm.low) != 3 or len(lm.high) != 3 or any(h < l for l, h in zip(lm.low, lm.high)):
            bad("landmarks", "low/high must be 3-vectors with low <= high")
        n = self.noise
        for name in ("pixel_sigma", "depth_sigma"):
            if getattr(n, name) < 0:
                bad(f"noise.{name}", "must be non-negative")
        if not 0.0 <= n.outlier_rate <= 1.0:
            bad("noise.outlier_rate", "must lie in [0, 1]")
        for k, a in enumerate(self.actors):
            where = f"actors[{k}]"
            if a.shape not in ("box", "ellipse"):
                bad(f"{where}.shape", f"unknown shape {a.shape!r}")
            if len(a.size) != 2 or min(a.size) <= 0:
                bad(f"{where}.size", "needs two positive extents")
            if not a.path or any(len(p) != 3 for p in a.path):
                bad(f"{where}.path", "needs at least one 3-D waypoint")
            if a.points < 0:
                bad(f"{where}.points", "must be non-negative")
            for m, cobj in enumerate(a.carried):
                if len(cobj.size) != 2 or min(cobj.size) <= 0:
                    bad(f"{where}.carried[{m}].size", "needs two positive extents")
                if cobj.points < 0:
                    bad(f"{where}.carried[{m}].points", "must be non-negative")
        return self


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise InvalidConfig(f"{where}: expected a table")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise InvalidConfig(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, val in data.items():
        kwargs[key] = _convert(cls, key, val, f"{where}.{key}" if where else key)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"{where or 'scene'}: {exc}") from None


_NESTED = {
    (SceneConfig, "camera"): CameraConfig,
    (SceneConfig, "landmarks"): LandmarkConfig,
    (SceneConfig, "noise"): NoiseConfig,
}
_NESTED_LISTS = {
    (SceneConfig, "trajectory"): Waypoint,
    (SceneConfig, "actors"): ActorConfig,
    (ActorConfig, "carried"): CarriedConfig,
}


def _convert(cls, key, val, where):
    if (cls, key) in _NESTED:
        return _build(_NESTED[(cls, key)], val, where)
    if (cls, key) in _NESTED_LISTS:
        if not isinstance(val, list):
            raise InvalidConfig(f"{where}: expected an array of tables")
        return [_build(_NESTED_LISTS[(cls, key)], v, f"{where}[{i}]") for i, v in enumerate(val)]
    default = next(f for f in dataclasses.fields(cls) if f.name == key)
    proto = default.default if default.default is not dataclasses.MISSING else None
    try:
        if isinstance(proto, bool):
            if not isinstance(val, bool):
                raise TypeError("expected true/false")
            return val
        if isinstance(proto, int):
            if isinstance(val, bool) or not float(val).is_integer():
                raise TypeError("expected an integer")
            return int(val)
        if isinstance(proto, float):
            if isinstance(val, bool):
                raise TypeError("expected a number")
            return float(val)
        if isinstance(proto, str):
            if not isinstance(val, str):
                raise TypeError("expected a string")
            return val
        if isinstance(proto, tuple):
            return tuple(float(x) for x in val)
        if key == "path":
            return [tuple(float(x) for x in p) for p in val]
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"{where}: {exc}") from None
    return val


def config_from_dict(data: dict) -> SceneConfig:
    if "schema_version" not in data:
        raise InvalidConfig("schema_version: missing")
    return _build(SceneConfig, data, "").validate()


def load_config(path) -> SceneConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise DatasetIOError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from None
    return config_from_dict(data)


def config_to_dict(cfg: SceneConfig) -> dict:
    def conv(x):
        if dataclasses.is_dataclass(x):
            return {f.name: conv(getattr(x, f.name)) for f in dataclasses.fields(x)}
        if isinstance(x, (list, tuple)):
            return [conv(v) for v in x]
        return x

    return conv(cfg)


# -- sampling helpers -----------------------------------------------------------------

def _segment(s, count):
    """Map normalised time to (segment index, local fraction) over ``count`` waypoints."""
    if count == 1:
        return 0, 0.0
    x = s * (count - 1)
    k = min(int(math.floor(x)), count - 2)
    return k, x - k


def camera_poses(cfg: SceneConfig) -> list:
    wps = cfg.trajectory
    quats = np.array([np.asarray(w.rotation, float) / np.linalg.norm(w.rotation) for w in wps])
    pos = np.array([w.position for w in wps], dtype=float)
    out = []
    for f in range(cfg.frames):
        s = f / (cfg.frames - 1)
        k, a = _segment(s, len(wps))
        if len(wps) == 1:
            q, t = quats[0], pos[0]
        else:
            slerp = Slerp([0.0, 1.0], Rotation.from_quat(quats[k:k + 2]))
            q = slerp([a]).as_quat()[0]
            t = (1 - a) * pos[k] + a * pos[k + 1]
        out.append(PoseSE3(tuple(q / np.linalg.norm(q)), tuple(t)))
    return out


def actor_centers(actor: ActorConfig, frames: int) -> np.ndarray:
    path = np.array(actor.path, dtype=float)
    out = np.empty((frames, 3))
    for f in range(frames):
        k, a = _segment(f / (frames - 1), len(path))
        out[f] = path[0] if len(path) == 1 else (1 - a) * path[k] + a * path[k + 1]
    return out


def actor_moving(centers: np.ndarray) -> np.ndarray:
    step = np.linalg.norm(np.diff(centers, axis=0), axis=1) > 1e-9
    return np.concatenate([step[:1], step]) if len(step) else np.zeros(len(centers), bool)


def _unit_shape_samples(rng, n, shape, exclude=()):
    """``n`` points in the unit box/disc (scaled by 0.9), avoiding the given local rectangles."""
    pts = []
    while len(pts) < n:
        a, b = rng.uniform(-1, 1, size=2)
        if shape == "ellipse" and a * a + b * b > 1:
            continue
        a, b = 0.9 * a, 0.9 * b
        if any(x0 <= a <= x1 and y0 <= b <= y1 for x0, x1, y0, y1 in exclude):
            continue
        pts.append((a, b))
    return np.array(pts).reshape(-1, 2)


def _outline(center, size, shape):
    w, h = size[0] / 2, size[1] / 2
    if shape == "ellipse":
        th = np.linspace(0, 2 * np.pi, 48, endpoint=False)
        off = np.column_stack([w * np.cos(th), h * np.sin(th), np.zeros_like(th)])
    else:
        off = np.array([[-w, -h, 0], [w, -h, 0], [w, h, 0], [-w, h, 0]], dtype=float)
    return center + off


def _rasterize(K, pose, outline, width, height):
    uv, z = project_many(K, pose, outline)
    if np.any(z <= 0):
        return np.zeros((height, width), dtype=bool)
    img = Image.new("1", (width, height), 0)
    # pixel centres sit at integer coordinates
    ImageDraw.Draw(img).polygon([(float(u), float(v)) for u, v in uv], fill=1, outline=1)
    return np.array(img, dtype=bool)


# -- generation -------------------------------------------------------------------------

@dataclass
class _Entities:
    world: list  # per frame (E, 3) positions
    label: np.ndarray  # (F, E)
    tracked: np.ndarray  # (E,)
    kind: np.ndarray  # (E,) 0 landmark, 1 actor point, 2 carried


def _entities(cfg: SceneConfig, centers) -> _Entities:
    F = cfg.frames
    rng = _rng(cfg.seed, _LANDMARKS)
    lm = rng.uniform(cfg.landmarks.low, cfg.landmarks.high, size=(cfg.landmarks.count, 3))
    offsets, owners, kinds, tracked = [], [], [], []
    for k, actor in enumerate(cfg.actors):
        r = _rng(cfg.seed, _ACTORS, k)
        w, h = actor.size
        holes = []
        for c in actor.carried:
            if c.occludes and c.depth_offset < 0:
                cx, cy = 2 * c.offset[0] / w, 2 * c.offset[1] / h
                hw, hh = c.size[0] / w + 0.05, c.size[1] / h + 0.05
                holes.append((cx - hw, cx + hw, cy - hh, cy + hh))
        ab = _unit_shape_samples(r, actor.points, actor.shape, holes)
        jit = r.uniform(-actor.depth_jitter, actor.depth_jitter, size=len(ab))
        for (a, b), dz in zip(ab, jit):
            offsets.append((a * w / 2, b * h / 2, dz))
            owners.append(k)
            kinds.append(1)
            tracked.append(True)
        for c in actor.carried:
            cab = _unit_shape_samples(r, c.points, "box")
            for a, b in cab:
                offsets.append((c.offset[0] + a * c.size[0] / 2, c.offset[1] + b * c.size[1] / 2, c.depth_offset))
                owners.append(k)
                kinds.append(2)
                tracked.append(c.tracked)
    offsets = np.array(offsets, dtype=float).reshape(-1, 3)
    owners = np.array(owners, dtype=int)
    n_lm = len(lm)
    E = n_lm + len(offsets)
    label = np.zeros((F, E), dtype=np.int64)
    world = []
    moving = [actor_moving(c) for c in centers]
    for f in range(F):
        pts = lm.copy()
        if len(offsets):
            pts = np.vstack([lm, np.array([centers[o][f] for o in owners]) + offsets])
            label[f, n_lm:] = [int(moving[o][f]) for o in owners]
        world.append(pts)
    kind = np.concatenate([np.zeros(n_lm, int), np.array(kinds, int)])
    trk = np.concatenate([np.ones(n_lm, bool), np.array(tracked, bool)])
    return _Entities(world, label, trk, kind)


def _render(cfg, K, pose, centers_f, f):
    W, H = cfg.camera.width, cfg.camera.height
    fg = np.full((H, W), np.inf)
    ids = np.zeros((H, W), dtype=np.int32)
    order = []
    for k, actor in enumerate(cfg.actors):
        _, z = project_many(K, pose, centers_f[k][None])
        order.append((-z[0], k))
    for _, k in sorted(order):
        actor = cfg.actors[k]
        c = centers_f[k]
        sil = _rasterize(K, pose, _outline(c, actor.size, actor.shape), W, H)
        _, zc = project_many(K, pose, c[None])
        ids[sil] = k + 1
        fg[sil] = zc[0]
        for cobj in actor.carried:
            oc = c + np.array([cobj.offset[0], cobj.offset[1], cobj.depth_offset])
            reg = _rasterize(K, pose, _outline(oc, cobj.size, "box"), W, H)
            _, zo = project_many(K, pose, oc[None])
            front = reg & (zo[0] < fg)
            fg[front] = zo[0]
            if cobj.occludes:
                ids[front] = 0
    off = cfg.noise.mask_offset
    if off:
        noisy = np.zeros_like(ids)
        for n in np.unique(ids[ids > 0]):
            m = ids == n
            m = ndimage.binary_dilation(m, iterations=off) if off > 0 else ndimage.binary_erosion(m, iterations=-off)
            noisy[m & (noisy == 0)] = n
        ids = noisy
    depth = np.where(np.isfinite(fg), fg, cfg.background_depth)
    if cfg.noise.depth_sigma > 0:
        depth = depth + _rng(cfg.seed, _DEPTH_GRID, f).normal(0, cfg.noise.depth_sigma, size=depth.shape)
    return MaskImage(ids), quantize_depth(depth), fg


def generate_scene(cfg: SceneConfig) -> FrameSequence:
    cfg.validate()
    K = cfg.camera.intrinsics
    W, H = cfg.camera.width, cfg.camera.height
    poses = camera_poses(cfg)
    centers = [actor_centers(a, cfg.frames) for a in cfg.actors]
    ents = _entities(cfg, centers)
    E = len(ents.tracked)
    noise = cfg.noise

    frames = []
    prev_index = None  # entity id -> keypoint index in previous frame
    for f in range(cfg.frames):
        pose = poses[f]
        mask, depth, fg = _render(cfg, K, pose, [c[f] for c in centers], f)
        uv, z = project_many(K, pose, ents.world[f])
        pix_noise = _rng(cfg.seed, _PIXEL, f).normal(0, 1, size=(E, 2)) * noise.pixel_sigma
        z_noise = _rng(cfg.seed, _DEPTH_KP, f).normal(0, 1, size=E) * noise.depth_sigma
        obs = uv + pix_noise
        visible = (z > 0) & np.all(np.isfinite(uv), axis=1)
        inb = visible & (obs[:, 0] >= 0) & (obs[:, 0] <= W - 1) & (obs[:, 1] >= 0) & (obs[:, 1] <= H - 1)
        ent = np.flatnonzero(inb)
        cols = np.clip(np.floor(uv[ent, 0] + 0.5).astype(int), 0, W - 1)
        rows = np.clip(np.floor(uv[ent, 1] + 0.5).astype(int), 0, H - 1)
        occluded = fg[rows, cols] < z[ent] - OCCLUSION_MARGIN
        ent = ent[~occluded]

        index = {int(e): i for i, e in enumerate(ent)}
        match = np.full(len(ent), -1, dtype=np.int64)
        if prev_index is not None:
            for i, e in enumerate(ent):
                if ents.tracked[e] and int(e) in prev_index:
                    match[i] = prev_index[int(e)]
        outliers = np.zeros(len(ent), dtype=bool)
        matched = np.flatnonzero(match >= 0)
        n_out = int(round(noise.outlier_rate * len(matched))) // 2 * 2
        if n_out >= 2:
            pick = _rng(cfg.seed, _OUTLIERS, f).choice(matched, size=n_out, replace=False)
            for a, b in zip(pick[0::2], pick[1::2]):
                match[a], match[b] = match[b], match[a]
            outliers[pick] = True
        kz = z[ent] + z_noise[ent]
        kz = np.where(kz > 0, kz, np.nan)
        kps = Keypoints(obs[ent, 0], obs[ent, 1], kz, match, ent.astype(np.int64), ents.label[f, ent])
        t = round(cfg.start_time + f / cfg.fps, 6)
        frames.append(Frame(t, kps, mask, depth, pose, outliers=outliers))
        prev_index = index
    return FrameSequence(K, W, H, frames, name=cfg.name)


def export_scene(seq: FrameSequence, directory):
    if not seq.frames:
        raise InvalidConfig("frames: cannot export an empty sequence")
    save_sequence(seq, directory)


def entity_kinds(cfg: SceneConfig) -> np.ndarray:
    """Per point id: 0 static landmark, 1 human-attached point, 2 carried-object point."""
    return _entities(cfg, [actor_centers(a, cfg.frames) for a in cfg.actors]).kind


# -- bundled scenes -----------------------------------------------------------------------

def benchmark_config(seed: int = 42) -> SceneConfig:
    """Two people walking in front of a static room; 300 landmarks, 20 points per person."""
    return SceneConfig(
        name="benchmark",
        seed=seed,
        frames=30,
        trajectory=[Waypoint((0.0, 0.0, 0.0)), Waypoint((0.25, -0.05, 0.1), (0.0, 0.0436, 0.0, 0.9990))],
        landmarks=LandmarkConfig(count=300, low=(-3.5, -2.2, 3.8), high=(3.5, 2.2, 6.5)),
        noise=NoiseConfig(pixel_sigma=0.25, outlier_rate=0.10, mask_offset=1, depth_sigma=0.01),
        actors=[
            ActorConfig(shape="box", size=(0.5, 1.7), path=[(-1.2, 0.1, 2.6), (0.2, 0.1, 2.4)], points=20),
            ActorConfig(shape="ellipse", size=(0.6, 1.6), path=[(1.3, 0.0, 3.4), (0.4, 0.0, 3.6)], points=20),
        ],
    )


def oim_config(seed: int = 7) -> SceneConfig:
    """One person walking with a held object in front of the torso."""
    return SceneConfig(
        name="carried-object",
        seed=seed,
        frames=20,
        trajectory=[Waypoint((0.0, 0.0, 0.0)), Waypoint((0.05, -0.1, 0.25))],
        landmarks=LandmarkConfig(count=200),
        noise=NoiseConfig(pixel_sigma=0.25, outlier_rate=0.0, mask_offset=0, depth_sigma=0.005),
        actors=[
            ActorConfig(
                shape="box", size=(0.5, 1.7), path=[(-0.6, 0.1, 2.2), (0.5, 0.1, 2.2)], points=80,
                carried=[CarriedConfig(offset=(0.0, -0.1), depth_offset=-0.25, size=(0.12, 0.12), points=20)],
            )
        ],
    )
