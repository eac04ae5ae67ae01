"""Sequence-level orchestration: per-frame F, classification, OIM, and scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import FrameSequence
from .errors import DegenerateMotion, InsufficientMatches, NoConsensus
from .geometry import estimate_fundamental_ransac, fundamental_from_poses
from .masks import build_distance_field
from .motion import ClassifierParams, State, classify_frame, frame_state
from .oim import OimThresholds, apply_oim, build_interaction_zone

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunParams:
    classifier: ClassifierParams = ClassifierParams()
    oim: OimThresholds = OimThresholds()
    use_oim: bool = True
    use_ground_truth_poses: bool = True
    ransac_iterations: int = 2000
    ransac_threshold: float = 1.0
    seed: int = 0


@dataclass
class FrameResult:
    timestamp: float
    results: list
    f_source: str  # "poses", "ransac" or "none"
    flipped: list = field(default_factory=list)


def frame_fundamental(seq: FrameSequence, t: int, params: RunParams):
    """F between frames ``t-1`` and ``t`` and where it came from."""
    if t == 0:
        return None, "none"
    prev, cur = seq.frames[t - 1], seq.frames[t]
    if params.use_ground_truth_poses and prev.pose is not None and cur.pose is not None:
        try:
            return fundamental_from_poses(seq.intrinsics, prev.pose, cur.pose), "poses"
        except DegenerateMotion:
            log.info("frame %s: no baseline, skipping geometric term", cur.stem)
            return None, "none"
    kps = cur.keypoints
    linked = np.flatnonzero(kps.match >= 0)
    linked = linked[kps.match[linked] < len(prev.keypoints)]
    q = prev.keypoints.pixels[kps.match[linked]]
    p = kps.pixels[linked]
    try:
        F, _ = estimate_fundamental_ransac(
            np.stack([q, p], axis=1), seed=params.seed + t,
            iterations=params.ransac_iterations, inlier_threshold=params.ransac_threshold,
        )
    except (InsufficientMatches, NoConsensus) as exc:
        log.warning("frame %s: RANSAC failed (%s)", cur.stem, exc)
        return None, "none"
    return F, "ransac"


def run_sequence(seq: FrameSequence, params: RunParams = RunParams()) -> list:
    out = []
    prev_state = None
    for t, frame in enumerate(seq.frames):
        F, source = frame_fundamental(seq, t, params)
        field_ = build_distance_field(frame.mask)
        results = classify_frame(frame.keypoints, prev_state, F, field_, params.classifier)
        flipped = []
        if params.use_oim and frame.mask.bits.any():
            zone = build_interaction_zone(frame.mask, frame.depth, params.oim)
            flipped = apply_oim(results, zone, thresholds=params.oim)
        for r in results:
            if r.flags:
                log.debug("frame %s keypoint %d: %s", frame.stem, r.index, ",".join(r.flags))
        out.append(FrameResult(frame.timestamp, results, source, flipped))
        prev_state = frame_state(frame.keypoints, results)
    return out


# -- scoring ---------------------------------------------------------------------------

def _prf(pred, truth):
    pred = np.asarray(pred, bool)
    truth = np.asarray(truth, bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn, "precision": precision, "recall": recall}


def _collect(seq, frames, select=None):
    pred, truth, pid = [], [], []
    for frame, fr in zip(seq.frames, frames):
        kps = frame.keypoints
        if kps.label is None:
            continue
        for r in fr.results:
            i = r.index
            if kps.label[i] < 0:
                continue
            if select is not None and not select(frame, i):
                continue
            pred.append(r.state.state is State.DYNAMIC)
            truth.append(bool(kps.label[i]))
            pid.append(int(kps.point_id[i]) if kps.point_id is not None else -1)
    return np.array(pred, bool), np.array(truth, bool), np.array(pid, int)


def score(seq: FrameSequence, frames: list, select=None) -> Optional[dict]:
    """Dynamic-class precision/recall against ground-truth labels.

    ``observations`` scores every labelled keypoint of every frame. ``points``
    scores each physical point once: it is predicted dynamic when it was classified
    dynamic in at least half of its observations, and truly dynamic when labelled
    dynamic in at least half of them.
    """
    pred, truth, pid = _collect(seq, frames, select)
    if not len(pred):
        return None
    report = {"observations": _prf(pred, truth)}
    if np.all(pid >= 0):
        ids = np.unique(pid)
        inv = np.searchsorted(ids, pid)
        n = np.bincount(inv)
        p_pt = np.bincount(inv, weights=pred) * 2 >= n
        t_pt = np.bincount(inv, weights=truth) * 2 >= n
        report["points"] = _prf(p_pt, t_pt)
    static = _prf(~pred, ~truth)
    report["static_observations"] = {"precision": static["precision"], "recall": static["recall"]}
    return report
