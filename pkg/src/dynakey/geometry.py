"""Two-view geometry: poses, intrinsics, fundamental matrices and epipolar distances.

Poses follow the TUM convention: a ``PoseSE3`` maps camera coordinates to
world coordinates (``X_w = R X_c + t``). Quaternions are stored ``(qx, qy, qz, qw)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import (
    BehindCamera,
    DegenerateLine,
    DegenerateMotion,
    InsufficientMatches,
    InvalidFundamental,
    NoConsensus,
    NonPositiveDepth,
)

LINE_EPS = 1e-12
RANK_TOL = 1e-8


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def inverse(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class PoseSE3:
    """Rigid camera-to-world transform."""

    rotation: tuple = (0.0, 0.0, 0.0, 1.0)
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if n == 0 or not np.isfinite(n):
            raise ValueError("quaternion must be finite and nonzero")
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm must be 1 within 1e-9, got {n!r}")
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", tuple(float(v) for v in q))
        object.__setattr__(self, "translation", tuple(float(v) for v in t))

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls()

    @classmethod
    def from_matrix(cls, T) -> "PoseSE3":
        T = np.asarray(T, dtype=float)
        q = Rotation.from_matrix(T[:3, :3]).as_quat()
        return cls(tuple(q / np.linalg.norm(q)), tuple(T[:3, 3]))

    @classmethod
    def from_rt(cls, R, t) -> "PoseSE3":
        q = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
        return cls(tuple(q / np.linalg.norm(q)), tuple(np.asarray(t, dtype=float)))

    @property
    def R(self) -> np.ndarray:
        return Rotation.from_quat(self.rotation).as_matrix()

    @property
    def t(self) -> np.ndarray:
        return np.array(self.translation)

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def inverse(self) -> "PoseSE3":
        R = self.R
        return PoseSE3.from_rt(R.T, -R.T @ self.t)

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        return PoseSE3.from_matrix(self.matrix @ other.matrix)

    def __matmul__(self, other):
        return self.compose(other)


@dataclass(frozen=True)
class FundamentalMatrix:
    """Rank-2 epipolar operator with ``p_cur^T F q_prev = 0``."""

    m: np.ndarray = field(repr=True)

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise InvalidFundamental("F must be a finite 3x3 matrix")
        s = np.linalg.svd(m, compute_uv=False)
        if s[0] == 0:
            raise InvalidFundamental("F is the zero matrix")
        if s[2] >= RANK_TOL * s[0]:
            raise InvalidFundamental(f"F is not rank 2 (singular values {s})")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def normalized(self) -> "FundamentalMatrix":
        return FundamentalMatrix(normalize_fundamental(self.m))


@dataclass(frozen=True)
class EpipolarLine:
    """Line ``X u + Y v + Z = 0`` in pixel coordinates."""

    X: float
    Y: float
    Z: float

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.X, self.Y, self.Z])


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def normalize_fundamental(m) -> np.ndarray:
    """Unit Frobenius norm, sign chosen so the largest-magnitude entry is positive."""
    m = np.asarray(m, dtype=float)
    m = m / np.linalg.norm(m)
    if m.flat[np.argmax(np.abs(m))] < 0:
        m = -m
    return m


def relative_pose(pose_prev: PoseSE3, pose_cur: PoseSE3):
    """(R, t) taking previous-camera coordinates to current-camera coordinates."""
    Rp, tp = pose_prev.R, pose_prev.t
    Rc, tc = pose_cur.R, pose_cur.t
    R = Rc.T @ Rp
    t = Rc.T @ (tp - tc)
    return R, t


def fundamental_from_poses(K: CameraIntrinsics, pose_prev: PoseSE3, pose_cur: PoseSE3) -> FundamentalMatrix:
    R, t = relative_pose(pose_prev, pose_cur)
    if np.linalg.norm(t) <= 1e-9:
        raise DegenerateMotion("relative translation is zero; epipolar geometry undefined")
    Kinv = K.inverse
    F = Kinv.T @ skew(t) @ R @ Kinv
    return FundamentalMatrix(normalize_fundamental(F))


def _as_matrix(F) -> np.ndarray:
    return F.m if isinstance(F, FundamentalMatrix) else np.asarray(F, dtype=float)


def epipolar_line(F, q) -> EpipolarLine:
    q = np.asarray(q, dtype=float)
    l = _as_matrix(F) @ np.array([q[0], q[1], 1.0])
    if abs(l[0]) < LINE_EPS and abs(l[1]) < LINE_EPS:
        raise DegenerateLine(f"epipolar line of {tuple(q)} has vanishing normal")
    return EpipolarLine(float(l[0]), float(l[1]), float(l[2]))


def reprojection_error(F, q, p) -> float:
    """Pixel distance from ``p`` to the epipolar line of ``q``."""
    l = epipolar_line(F, q)
    num = abs(l.X * p[0] + l.Y * p[1] + l.Z)
    return float(num / np.hypot(l.X, l.Y))


def reprojection_errors(F, q, p) -> np.ndarray:
    """Vectorised point-line distances for ``(N, 2)`` arrays; NaN where the line degenerates."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    m = _as_matrix(F)
    lines = np.column_stack([q, np.ones(len(q))]) @ m.T
    den = np.hypot(lines[:, 0], lines[:, 1])
    num = np.abs(lines[:, 0] * p[:, 0] + lines[:, 1] * p[:, 1] + lines[:, 2])
    bad = (np.abs(lines[:, 0]) < LINE_EPS) & (np.abs(lines[:, 1]) < LINE_EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    out[bad] = np.nan
    return out


def project(K: CameraIntrinsics, pose: PoseSE3, point):
    """Pinhole projection of a world point; returns ``(pixel, depth)``."""
    Xc = pose.R.T @ (np.asarray(point, dtype=float) - pose.t)
    z = Xc[2]
    if z <= 0:
        raise BehindCamera(f"point has camera depth {z}")
    u = K.fx * Xc[0] / z + K.cx
    v = K.fy * Xc[1] / z + K.cy
    return np.array([u, v]), float(z)


def project_many(K: CameraIntrinsics, pose: PoseSE3, points):
    """Vectorised projection; points behind the camera get NaN pixels."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    Xc = (P - pose.t) @ pose.R
    z = Xc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.column_stack([K.fx * Xc[:, 0] / z + K.cx, K.fy * Xc[:, 1] / z + K.cy])
    uv[z <= 0] = np.nan
    return uv, z


def backproject(K: CameraIntrinsics, pixel, depth: float, pose: PoseSE3) -> np.ndarray:
    if not depth > 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth}")
    u, v = pixel
    Xc = np.array([(u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth])
    return pose.R @ Xc + pose.t


# -- estimation ---------------------------------------------------------------

def _hartley(pts):
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2) / d if d > 0 else 1.0
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
    h = np.column_stack([pts, np.ones(len(pts))]) @ T.T
    return h, T


def eight_point(q, p) -> np.ndarray:
    """Normalized 8-point least squares with rank-2 enforcement (``p^T F q = 0``)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    qh, Tq = _hartley(q)
    ph, Tp = _hartley(p)
    A = np.column_stack(
        [
            ph[:, 0] * qh[:, 0], ph[:, 0] * qh[:, 1], ph[:, 0],
            ph[:, 1] * qh[:, 0], ph[:, 1] * qh[:, 1], ph[:, 1],
            qh[:, 0], qh[:, 1], np.ones(len(q)),
        ]
    )
    _, _, Vt = np.linalg.svd(A)
    Fn = Vt[-1].reshape(3, 3)
    U, S, Vt = np.linalg.svd(Fn)
    S[2] = 0.0
    Fn = U @ np.diag(S) @ Vt
    return normalize_fundamental(Tp.T @ Fn @ Tq)


def _split_matches(matches):
    arr = np.asarray(matches, dtype=float)
    if arr.ndim != 3 or arr.shape[1:] != (2, 2):
        raise ValueError("matches must have shape (N, 2, 2) as (q, p) pixel pairs")
    return arr[:, 0, :], arr[:, 1, :]


def estimate_fundamental_ransac(matches, seed: int = 0, iterations: int = 2000, inlier_threshold: float = 1.0):
    """RANSAC over minimal 8-point samples, then a least-squares refit on the consensus set.

    Returns ``(FundamentalMatrix, inlier_flags)``.
    """
    if len(matches) < 8:
        raise InsufficientMatches(f"need at least 8 matches, got {len(matches)}")
    q, p = _split_matches(matches)
    n = len(q)
    rng = np.random.default_rng(seed)
    best_count = -1
    best_mask = None
    for _ in range(iterations):
        idx = rng.choice(n, size=8, replace=False)
        F = eight_point(q[idx], p[idx])
        err = reprojection_errors(F, q, p)
        mask = np.nan_to_num(err, nan=np.inf) < inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask = count, mask
            if count == n:
                break
    if best_count < 8:
        raise NoConsensus(f"best consensus set has {best_count} matches")
    F = eight_point(q[best_mask], p[best_mask])
    err = reprojection_errors(F, q, p)
    mask = np.nan_to_num(err, nan=np.inf) < inlier_threshold
    if mask.sum() < best_count:
        # the refit may lose a marginal point; keep the consensus the hypothesis earned
        mask = best_mask
    try:
        Fm = FundamentalMatrix(F)
    except InvalidFundamental as exc:
        raise NoConsensus(str(exc)) from exc
    return Fm, mask
