"""Trajectory metrics: absolute trajectory error, relative pose error, improvement rates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional

import numpy as np

from .dataset import associate
from .errors import InsufficientOverlap, ZeroBaseline

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class Alignment:
    """``gt ~ scale * R @ est + t``."""

    R: np.ndarray
    t: np.ndarray
    scale: float = 1.0
    degenerate: bool = False

    def apply(self, pts) -> np.ndarray:
        return self.scale * np.asarray(pts, dtype=float) @ self.R.T + self.t


def _min_rotation(a, b):
    """Smallest rotation taking unit vector ``a`` onto unit vector ``b``."""
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    s = np.linalg.norm(v)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        # half turn about a canonical axis perpendicular to a
        axis = np.cross(a, np.eye(3)[np.argmin(np.abs(a))])
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx * ((1 - c) / s**2)


def align_umeyama(est, gt, with_scale: bool = False) -> Alignment:
    """Closed-form least-squares rigid (or similarity) alignment of ``est`` onto ``gt``.

    Fewer than three points, or collinear points, leave the rotation about the
    common line undetermined; a canonical minimal rotation is used and the result
    is flagged ``degenerate``.
    """
    X = np.asarray(est, dtype=float).reshape(-1, 3)
    Y = np.asarray(gt, dtype=float).reshape(-1, 3)
    if X.shape != Y.shape or len(X) == 0:
        raise ValueError("est and gt must be non-empty (N, 3) arrays of equal size")
    if np.array_equal(X, Y):
        return Alignment(np.eye(3), np.zeros(3))
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    var_x = (Xc**2).sum() / len(X)
    sx = np.linalg.svd(Xc, compute_uv=False)
    rank = int(np.sum(sx > _RANK_TOL * max(sx[0], 1.0))) if len(sx) else 0

    if rank >= 2 and len(X) >= 3:
        C = Yc.T @ Xc / len(X)
        U, D, Vt = np.linalg.svd(C)
        S = np.eye(3)
        if np.linalg.det(U) * np.linalg.det(Vt) < 0:
            S[2, 2] = -1
        R = U @ S @ Vt
        scale = float(np.trace(np.diag(D) @ S) / var_x) if with_scale else 1.0
        degenerate = False
    else:
        degenerate = True
        R = np.eye(3)
        if rank == 1:
            _, _, vx = np.linalg.svd(Xc)
            dx = vx[0]
            sy, vy = np.linalg.svd(Yc)[1:]
            if sy[0] > _RANK_TOL:
                dy = vy[0]
                if np.dot(Xc @ dx, Yc @ dy) < 0:
                    dy = -dy
                R = _min_rotation(dx, dy)
        scale = 1.0
        if with_scale and var_x > 0:
            scale = float(np.sum((Yc @ R) * Xc) / len(X) / var_x)
    t = my - scale * R @ mx
    return Alignment(R, t, scale, degenerate)


def _positions(poses):
    return np.array([p.translation for p in poses], dtype=float)


def _matrices(poses):
    out = np.empty((len(poses), 4, 4))
    for k, p in enumerate(poses):
        out[k] = p.pose.matrix
    return out


def associated(est, gt, max_diff: float = 0.02):
    """Time-associated ``(est, gt)`` pose lists."""
    pairs = associate([p.timestamp for p in est], [p.timestamp for p in gt], max_diff).pairs
    return [est[i] for i, _ in pairs], [gt[j] for _, j in pairs]


@dataclass
class AlignedPair:
    est: list
    gt: list
    alignment: Alignment
    residuals: np.ndarray


def align_trajectories(est, gt, max_diff: float = 0.02, with_scale: bool = False) -> AlignedPair:
    e, g = associated(est, gt, max_diff)
    if len(e) < 2:
        raise InsufficientOverlap(f"only {len(e)} associated poses; need at least 2")
    P, Q = _positions(e), _positions(g)
    al = align_umeyama(P, Q, with_scale)
    res = np.linalg.norm(Q - al.apply(P), axis=1)
    return AlignedPair(e, g, al, res)


def ate_rmse(est, gt, max_diff: float = 0.02, with_scale: bool = False) -> float:
    res = align_trajectories(est, gt, max_diff, with_scale).residuals
    return float(np.sqrt(np.mean(res**2)))


def rotation_angle_deg(R) -> float:
    """Angle of a rotation matrix; atan2 form stays accurate near 0 and 180 degrees."""
    R = np.asarray(R, dtype=float)
    c = (np.trace(R) - 1.0) / 2.0
    s = 0.5 * math.sqrt((R[2, 1] - R[1, 2]) ** 2 + (R[0, 2] - R[2, 0]) ** 2 + (R[1, 0] - R[0, 1]) ** 2)
    return math.degrees(math.atan2(s, c))


def _relative(Ra, ta, Rb, tb):
    """``inv(a) @ b`` for rigid motions given as (R, t)."""
    return Ra.T @ Rb, Ra.T @ (tb - ta)


def rpe(est, gt, delta: int = 1, max_diff: float = 0.02):
    """Translational (m) and rotational (deg) RMSE of relative motions over ``delta`` frames."""
    if delta < 1:
        raise ValueError("delta must be at least 1")
    e, g = associated(est, gt, max_diff)
    if len(e) < delta + 1:
        raise InsufficientOverlap(f"{len(e)} associated poses; need at least {delta + 1}")
    Te, Tg = _matrices(e), _matrices(g)
    trans, rot = [], []
    for i in range(len(e) - delta):
        j = i + delta
        Rg, tg = _relative(Tg[i, :3, :3], Tg[i, :3, 3], Tg[j, :3, :3], Tg[j, :3, 3])
        Re, te = _relative(Te[i, :3, :3], Te[i, :3, 3], Te[j, :3, :3], Te[j, :3, 3])
        dR, dt = _relative(Rg, tg, Re, te)
        trans.append(np.linalg.norm(dt))
        rot.append(rotation_angle_deg(dR))
    trans, rot = np.array(trans), np.array(rot)
    return float(np.sqrt(np.mean(trans**2))), float(np.sqrt(np.mean(rot**2)))


def improvement_rate(baseline_rmse: float, method_rmse: float) -> float:
    """Percentage reduction of ``method_rmse`` relative to ``baseline_rmse``.

    Evaluated in decimal arithmetic on the shortest decimal form of the inputs so
    that e.g. ``(0.1, 0.102)`` gives exactly ``-2.0``.
    """
    if not baseline_rmse > 0:
        raise ZeroBaseline(f"baseline RMSE must be positive, got {baseline_rmse}")
    b = Decimal(repr(float(baseline_rmse)))
    m = Decimal(repr(float(method_rmse)))
    return float(Decimal(100) * (b - m) / b)


# -- reports ------------------------------------------------------------------------------

@dataclass
class MetricReport:
    sequence: str
    ate_rmse: float
    rpe_trans_rmse: float
    rpe_rot_rmse: float
    improvement_vs_baseline: Optional[dict] = None
    baseline: Optional[dict] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "sequence": self.sequence,
            "ate_rmse": self.ate_rmse,
            "rpe_trans_rmse": self.rpe_trans_rmse,
            "rpe_rot_rmse": self.rpe_rot_rmse,
            "improvement_vs_baseline": self.improvement_vs_baseline,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


REPORT_SCHEMA = {
    "type": "object",
    "required": ["sequence", "ate_rmse", "rpe_trans_rmse", "rpe_rot_rmse", "improvement_vs_baseline"],
    "additionalProperties": False,
    "properties": {
        "sequence": {"type": "string"},
        "ate_rmse": {"type": "number", "minimum": 0},
        "rpe_trans_rmse": {"type": "number", "minimum": 0},
        "rpe_rot_rmse": {"type": "number", "minimum": 0},
        "improvement_vs_baseline": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["ate", "rpe_trans", "rpe_rot"],
                    "additionalProperties": False,
                    "properties": {k: {"type": ["number", "null"]} for k in ("ate", "rpe_trans", "rpe_rot")},
                },
            ]
        },
    },
}


def _rate_or_none(b, m):
    try:
        return improvement_rate(b, m)
    except ZeroBaseline:
        return None


def evaluate(est, gt, baseline=None, sequence: str = "sequence", max_diff: float = 0.02,
             with_scale: bool = False, delta: int = 1) -> MetricReport:
    ate = ate_rmse(est, gt, max_diff, with_scale)
    rt, rr = rpe(est, gt, delta, max_diff)
    rep = MetricReport(sequence, ate, rt, rr)
    if baseline is not None:
        bate = ate_rmse(baseline, gt, max_diff, with_scale)
        bt, br = rpe(baseline, gt, delta, max_diff)
        rep.baseline = {"ate_rmse": bate, "rpe_trans_rmse": bt, "rpe_rot_rmse": br}
        rep.improvement_vs_baseline = {
            "ate": _rate_or_none(bate, ate),
            "rpe_trans": _rate_or_none(bt, rt),
            "rpe_rot": _rate_or_none(br, rr),
        }
    return rep


def format_table(reports) -> str:
    """Text table in the layout of per-sequence ATE / RPE improvement tables."""
    lines = []
    head = f"{'sequence':<16} {'ATE [m]':>10} {'RPE t [m]':>10} {'RPE r [deg]':>12}"
    has_rates = any(r.improvement_vs_baseline for r in reports)
    if has_rates:
        head += f" {'ATE impr.':>10} {'RPE t impr.':>12} {'RPE r impr.':>12}"
    lines += [head, "-" * len(head)]

    def pct(x):
        return f"{x:.1f}%" if x is not None else "-"

    for r in reports:
        row = f"{r.sequence:<16} {r.ate_rmse:>10.4f} {r.rpe_trans_rmse:>10.4f} {r.rpe_rot_rmse:>12.4f}"
        if has_rates:
            imp = r.improvement_vs_baseline or {}
            row += f" {pct(imp.get('ate')):>10} {pct(imp.get('rpe_trans')):>12} {pct(imp.get('rpe_rot')):>12}"
        lines.append(row)
    return "\n".join(lines)


def report_from_dict(d: dict) -> MetricReport:
    return MetricReport(d["sequence"], d["ate_rmse"], d["rpe_trans_rmse"], d["rpe_rot_rmse"],
                        d.get("improvement_vs_baseline"))
