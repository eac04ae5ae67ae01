"""TUM RGB-D style sequence layout: trajectories, association, depth/mask images, keypoint files.

Directory layout read by :func:`load_sequence`::

    groundtruth.txt          timestamp tx ty tz qx qy qz qw      (optional)
    rgb.txt / depth.txt      timestamp filename                  (frame index)
    depth/<stem>.png         16-bit, metres * 5000, 0 = no measurement
    masks/<stem>.png         8-bit instance ids, 0 = background  (optional)
    keypoints/<stem>.csv     frame_ts,idx,u,v,z[,point_id,label]
    matches/<stem>.csv       frame_ts,idx_prev,idx_cur
    camera.txt               fx fy cx cy width height             (optional)

``<stem>`` is the stem of the file listed for the frame in the index file.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from PIL import Image

from .errors import DatasetIOError, NonMonotonicTimestamps, ParseError, UnsupportedBitDepth
from .geometry import CameraIntrinsics, PoseSE3
from .masks import MaskImage
from .motion import Keypoints

log = logging.getLogger(__name__)

DEPTH_SCALE = 5000.0
TUM_FR3 = CameraIntrinsics(535.4, 539.2, 320.1, 247.6)
TOOL_NAME = "dynakey"
KEYPOINT_COLUMNS = ["frame_ts", "idx", "u", "v", "z"]
MATCH_COLUMNS = ["frame_ts", "idx_prev", "idx_cur"]


@dataclass(frozen=True)
class StampedPose:
    timestamp: float
    translation: tuple
    quaternion: tuple  # qx, qy, qz, qw

    @property
    def pose(self) -> PoseSE3:
        return PoseSE3(self.quaternion, self.translation)

    @classmethod
    def from_pose(cls, timestamp: float, pose: PoseSE3) -> "StampedPose":
        return cls(float(timestamp), pose.translation, pose.rotation)


@dataclass
class Frame:
    timestamp: float
    keypoints: Keypoints
    mask: MaskImage
    depth: np.ndarray
    pose: Optional[PoseSE3] = None
    stem: Optional[str] = None
    outliers: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.stem is None:
            self.stem = format_stamp(self.timestamp)


@dataclass
class FrameSequence:
    intrinsics: CameraIntrinsics
    width: int
    height: int
    frames: list
    name: str = "sequence"

    def __len__(self):
        return len(self.frames)

    def trajectory(self) -> list:
        return [StampedPose.from_pose(f.timestamp, f.pose) for f in self.frames if f.pose is not None]


def format_stamp(t: float) -> str:
    return f"{t:.6f}"


# -- atomic writes --------------------------------------------------------------

def _atomic_write_bytes(path, data: bytes):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise DatasetIOError(f"cannot write {path}: {exc}") from exc


def atomic_write_text(path, text: str):
    _atomic_write_bytes(path, text.encode("utf-8"))


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetIOError(f"cannot read {path}: {exc}") from exc


# -- trajectories -----------------------------------------------------------------

def parse_trajectory(path) -> list:
    poses = []
    last = None
    for lineno, raw in enumerate(_read_text(path).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 8:
            raise ParseError(f"expected 8 fields, got {len(parts)}", line=lineno, path=path)
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", line=lineno, path=path) from None
        if not all(np.isfinite(vals)):
            raise ParseError("non-finite field", line=lineno, path=path)
        t = vals[0]
        if last is not None and t <= last:
            raise NonMonotonicTimestamps(f"timestamp {t!r} not after {last!r}", line=lineno, path=path)
        last = t
        q = np.array(vals[4:8])
        n = np.linalg.norm(q)
        if n == 0:
            raise ParseError("zero quaternion", line=lineno, path=path)
        poses.append(StampedPose(t, tuple(vals[1:4]), tuple(float(x) for x in q / n)))
    return poses


def write_trajectory(poses, path):
    lines = [f"# {TOOL_NAME} trajectory, schema tum-v1: timestamp tx ty tz qx qy qz qw"]
    for p in poses:
        fields = [p.timestamp, *p.translation, *p.quaternion]
        lines.append(" ".join(f"{x:.6f}" for x in fields))
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- association ------------------------------------------------------------------

class Association(NamedTuple):
    pairs: list  # (index into a, index into b), ascending in a
    skipped: int  # entries of a and b left unpaired


def associate(timestamps_a, timestamps_b, max_diff: float = 0.02) -> Association:
    """Greedy globally-nearest unique pairing of two sorted timestamp lists."""
    a = np.asarray(timestamps_a, dtype=float)
    b = np.asarray(timestamps_b, dtype=float)
    cands = []
    for i, t in enumerate(a):
        lo = np.searchsorted(b, t - max_diff, side="left")
        hi = np.searchsorted(b, t + max_diff, side="right")
        for j in range(lo, hi):
            gap = abs(t - b[j])
            if gap <= max_diff:
                cands.append((gap, i, j))
    cands.sort()
    used_a, used_b = set(), set()
    pairs = []
    for _, i, j in cands:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    pairs.sort()
    return Association(pairs, len(a) + len(b) - 2 * len(pairs))


def read_index(path) -> list:
    """``timestamp filename`` index file as ``(timestamp, filename)`` tuples."""
    out = []
    for lineno, raw in enumerate(_read_text(path).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ParseError("expected 'timestamp filename'", line=lineno, path=path)
        try:
            t = float(parts[0])
        except ValueError:
            raise ParseError(f"bad timestamp {parts[0]!r}", line=lineno, path=path) from None
        out.append((t, parts[1]))
    return out


def write_index(entries, path, what: str):
    lines = [f"# {what} written by {TOOL_NAME}", "# timestamp filename"]
    lines += [f"{format_stamp(t)} {name}" for t, name in entries]
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- images -------------------------------------------------------------------------

def load_depth(path) -> np.ndarray:
    """16-bit depth image in metres; missing measurements become NaN."""
    try:
        with Image.open(path) as img:
            mode = img.mode
            raw = np.array(img)
    except OSError as exc:
        raise DatasetIOError(f"cannot read depth image {path}: {exc}") from exc
    if mode not in ("I;16", "I;16B", "I;16L", "I") or raw.ndim != 2:
        raise UnsupportedBitDepth(f"{path}: expected 16-bit single channel, got mode {mode}")
    if mode == "I" and (raw.min(initial=0) < 0 or raw.max(initial=0) > 65535):
        raise UnsupportedBitDepth(f"{path}: values outside 16-bit range")
    raw = raw.astype(np.uint16)
    return decode_depth(raw)


def decode_depth(raw) -> np.ndarray:
    raw = np.asarray(raw)
    out = raw.astype(np.float64) / DEPTH_SCALE
    out[raw == 0] = np.nan
    return out


def encode_depth(depth) -> np.ndarray:
    d = np.asarray(depth, dtype=np.float64)
    raw = np.where(np.isfinite(d) & (d > 0), np.rint(np.nan_to_num(d) * DEPTH_SCALE), 0)
    return np.clip(raw, 0, 65535).astype(np.uint16)


def quantize_depth(depth) -> np.ndarray:
    """Round a metric depth grid to what a 16-bit TUM depth image can hold."""
    return decode_depth(encode_depth(depth))


def _png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def write_depth(depth, path):
    raw = encode_depth(depth)
    _atomic_write_bytes(path, _png_bytes(Image.fromarray(raw)))


def load_mask(path) -> MaskImage:
    try:
        with Image.open(path) as img:
            mode = img.mode
            ids = np.array(img)
    except OSError as exc:
        raise DatasetIOError(f"cannot read mask image {path}: {exc}") from exc
    if mode not in ("L", "P") or ids.ndim != 2:
        raise UnsupportedBitDepth(f"{path}: expected 8-bit single channel mask, got mode {mode}")
    return MaskImage(ids.astype(np.int32))


def write_mask(mask: MaskImage, path):
    if mask.ids.max(initial=0) > 255:
        raise ValueError("mask instance ids must fit in 8 bits")
    _atomic_write_bytes(path, _png_bytes(Image.fromarray(mask.ids.astype(np.uint8))))


# -- keypoint / match tables ----------------------------------------------------------

_LABEL_NAMES = {"static": 0, "dynamic": 1, "0": 0, "1": 1, "": -1, "unknown": -1}


def write_keypoints(frame_ts: float, kps: Keypoints, path):
    cols = list(KEYPOINT_COLUMNS)
    if kps.point_id is not None:
        cols.append("point_id")
    if kps.label is not None:
        cols.append("label")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    ts = format_stamp(frame_ts)
    for i in range(len(kps)):
        z = kps.z[i]
        row = [ts, i, repr(float(kps.u[i])), repr(float(kps.v[i])), repr(float(z)) if np.isfinite(z) else ""]
        if kps.point_id is not None:
            row.append(int(kps.point_id[i]))
        if kps.label is not None:
            row.append({0: "static", 1: "dynamic"}.get(int(kps.label[i]), ""))
        w.writerow(row)
    atomic_write_text(path, buf.getvalue())


def write_matches(frame_ts: float, kps: Keypoints, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MATCH_COLUMNS)
    ts = format_stamp(frame_ts)
    for i, j in enumerate(kps.match):
        if j >= 0:
            w.writerow([ts, int(j), i])
    atomic_write_text(path, buf.getvalue())


def _read_csv(path, required):
    reader = csv.DictReader(io.StringIO(_read_text(path)))
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise ParseError(f"missing columns {missing}", path=path)
    return list(enumerate(reader, start=2))


def read_keypoints(path, match_path=None, depth=None) -> Keypoints:
    """Keypoint table, optionally joined with its match file.

    Blank or zero ``z`` falls back to the depth grid at the keypoint pixel.
    """
    rows = _read_csv(path, KEYPOINT_COLUMNS)
    n = len(rows)
    u = np.empty(n)
    v = np.empty(n)
    z = np.full(n, np.nan)
    pid = np.full(n, -1, dtype=np.int64)
    lab = np.full(n, -1, dtype=np.int64)
    has_pid = has_lab = False
    seen = np.zeros(n, dtype=bool)
    for lineno, row in rows:
        try:
            i = int(row["idx"])
            if not 0 <= i < n or seen[i]:
                raise ValueError(f"keypoint index {i} out of range or repeated")
            seen[i] = True
            u[i] = float(row["u"])
            v[i] = float(row["v"])
            zs = (row.get("z") or "").strip()
            if zs:
                z[i] = float(zs)
            if row.get("point_id") not in (None, ""):
                pid[i] = int(row["point_id"])
                has_pid = True
            if "label" in row and row["label"] is not None:
                lab[i] = _LABEL_NAMES[row["label"].strip().lower()]
                has_lab = has_lab or lab[i] >= 0
        except (ValueError, KeyError) as exc:
            raise ParseError(str(exc), line=lineno, path=path) from None
    z[~(z > 0)] = np.nan
    if depth is not None:
        h, w = depth.shape
        for i in np.flatnonzero(~np.isfinite(z)):
            col, r = int(np.floor(u[i] + 0.5)), int(np.floor(v[i] + 0.5))
            if 0 <= r < h and 0 <= col < w:
                z[i] = depth[r, col]
    match = np.full(n, -1, dtype=np.int64)
    if match_path is not None and Path(match_path).exists():
        for lineno, row in _read_csv(match_path, MATCH_COLUMNS):
            try:
                cur, prev = int(row["idx_cur"]), int(row["idx_prev"])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=match_path) from None
            if not 0 <= cur < n or prev < 0:
                raise ParseError(f"match ({prev} -> {cur}) out of range", line=lineno, path=match_path)
            match[cur] = prev
    return Keypoints(u, v, z, match, pid if has_pid else None, lab if has_lab else None)


# -- camera ---------------------------------------------------------------------------

def read_camera(path):
    for lineno, raw in enumerate(_read_text(path).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ParseError("expected 'fx fy cx cy width height'", line=lineno, path=path)
        fx, fy, cx, cy = (float(p) for p in parts[:4])
        return CameraIntrinsics(fx, fy, cx, cy), int(parts[4]), int(parts[5])
    raise ParseError("empty camera file", path=path)


def write_camera(K: CameraIntrinsics, width: int, height: int, path):
    text = (f"# {TOOL_NAME} camera: fx fy cx cy width height\n"
            f"{K.fx!r} {K.fy!r} {K.cx!r} {K.cy!r} {width} {height}\n")
    atomic_write_text(path, text)


# -- whole sequences ------------------------------------------------------------------

def load_sequence(directory, max_diff: float = 0.02) -> FrameSequence:
    root = Path(directory)
    if not root.is_dir():
        raise DatasetIOError(f"{root} is not a directory")
    if (root / "camera.txt").exists():
        K, width, height = read_camera(root / "camera.txt")
    else:
        K, width, height = TUM_FR3, 640, 480
        log.info("no camera.txt in %s; using TUM fr3 intrinsics", root)

    depth_index = read_index(root / "depth.txt") if (root / "depth.txt").exists() else []
    if (root / "rgb.txt").exists():
        frame_index = read_index(root / "rgb.txt")
        assoc = associate([t for t, _ in frame_index], [t for t, _ in depth_index], max_diff)
        depth_for = {i: depth_index[j][1] for i, j in assoc.pairs}
    elif depth_index:
        frame_index = depth_index
        depth_for = {i: name for i, (_, name) in enumerate(depth_index)}
    else:
        raise DatasetIOError(f"{root} has neither rgb.txt nor depth.txt")

    pose_for = {}
    if (root / "groundtruth.txt").exists():
        gt = parse_trajectory(root / "groundtruth.txt")
        assoc = associate([t for t, _ in frame_index], [p.timestamp for p in gt], max_diff)
        pose_for = {i: gt[j].pose for i, j in assoc.pairs}
        if assoc.skipped:
            log.info("%d timestamps left unassociated with ground truth", assoc.skipped)

    frames = []
    for i, (t, name) in enumerate(frame_index):
        stem = Path(name).stem
        if i in depth_for:
            depth = load_depth(root / depth_for[i])
            height, width = depth.shape
        else:
            depth = np.full((height, width), np.nan)
        mpath = root / "masks" / f"{stem}.png"
        mask = load_mask(mpath) if mpath.exists() else MaskImage.empty(width, height)
        if mask.ids.shape != depth.shape:
            raise ParseError(f"mask {mask.ids.shape} and depth {depth.shape} shapes differ", path=mpath)
        kpath = root / "keypoints" / f"{stem}.csv"
        if kpath.exists():
            kps = read_keypoints(kpath, root / "matches" / f"{stem}.csv", depth)
        else:
            kps = Keypoints.empty()
        frames.append(Frame(t, kps, mask, depth, pose_for.get(i), stem))
    return FrameSequence(K, width, height, frames, name=root.name)


def save_sequence(seq: FrameSequence, directory):
    """Write a sequence in the layout :func:`load_sequence` reads."""
    root = Path(directory)
    write_camera(seq.intrinsics, seq.width, seq.height, root / "camera.txt")
    depth_entries = []
    for f in seq.frames:
        name = f"depth/{f.stem}.png"
        write_depth(f.depth, root / name)
        depth_entries.append((f.timestamp, name))
        write_mask(f.mask, root / "masks" / f"{f.stem}.png")
        write_keypoints(f.timestamp, f.keypoints, root / "keypoints" / f"{f.stem}.csv")
        write_matches(f.timestamp, f.keypoints, root / "matches" / f"{f.stem}.csv")
    write_index(depth_entries, root / "depth.txt", "depth images")
    gt = seq.trajectory()
    if gt:
        write_trajectory(gt, root / "groundtruth.txt")
