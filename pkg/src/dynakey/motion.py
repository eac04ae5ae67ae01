"""Geometric moving probability, probability fusion and the per-keypoint belief filter."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateLine, NegativeDepth, NegativeError, OutOfBounds
from .geometry import reprojection_error
from .masks import (
    MISSING_DEPTH_FALLBACK,
    MaskDistanceField,
    Zone,
    semantic_moving_probability,
)

ALPHA_MIN, ALPHA_MAX, ALPHA_SLOPE = 0.5, 0.9, 0.04
PROB_CLAMP = 1e-6


class State(str, enum.Enum):
    STATIC = "Static"
    DYNAMIC = "Dynamic"


class Provenance(str, enum.Enum):
    CLASSIFIER = "Classifier"
    OIM = "OIM"


class Source(str, enum.Enum):
    GEOMETRIC_ONLY = "GeometricOnly"
    SEMANTIC_ONLY = "SemanticOnly"
    FUSED = "Fused"
    NO_OBSERVATION = "NoObservation"


@dataclass(frozen=True)
class FusionRule:
    source: Source
    omega: Optional[float] = None

    @property
    def tag(self) -> str:
        if self.source is Source.FUSED:
            return f"Fused({self.omega:g})"
        return self.source.value


@dataclass(frozen=True)
class ClassifierParams:
    omega_uncertain: float = 0.5
    omega_reliable: float = 0.1
    epsilon: float = 0.1
    sigma: float = 1.0
    decision_threshold: float = 0.5
    new_track_prior: float = 0.5
    fixed_alpha: Optional[float] = None
    fixed_beta: Optional[float] = None

    def __post_init__(self):
        for name in ("omega_uncertain", "omega_reliable", "epsilon", "decision_threshold", "new_track_prior"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class Keypoints:
    """Keypoints of one frame as parallel arrays.

    ``match[i]`` is the index of the predecessor in the previous frame, or -1.
    ``z`` holds NaN where depth is missing. ``point_id`` and ``label`` are optional
    ground truth (label 1 = dynamic, 0 = static, -1 = unknown).
    """

    u: np.ndarray
    v: np.ndarray
    z: np.ndarray
    match: np.ndarray
    point_id: Optional[np.ndarray] = None
    label: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.u)
        cast = {"u": float, "v": float, "z": float, "match": np.int64}
        for name, dt in cast.items():
            arr = np.asarray(getattr(self, name), dtype=dt).reshape(-1)
            if len(arr) != n:
                raise ValueError(f"keypoint column {name!r} has length {len(arr)}, expected {n}")
            object.__setattr__(self, name, arr)
        for name in ("point_id", "label"):
            val = getattr(self, name)
            if val is not None:
                arr = np.asarray(val, dtype=np.int64).reshape(-1)
                if len(arr) != n:
                    raise ValueError(f"keypoint column {name!r} has wrong length")
                object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.u)

    @property
    def pixels(self) -> np.ndarray:
        return np.column_stack([self.u, self.v])

    @classmethod
    def empty(cls) -> "Keypoints":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64))

    def take(self, order) -> "Keypoints":
        order = np.asarray(order)
        opt = lambda a: None if a is None else a[order]  # noqa: E731
        return Keypoints(self.u[order], self.v[order], self.z[order], self.match[order],
                         opt(self.point_id), opt(self.label))


@dataclass(frozen=True)
class KeypointObservation:
    pixel: tuple
    depth: Optional[float]
    matched: bool
    match_link: Optional[int]
    reproj_error: Optional[float]
    signed_mask_dist: float
    zone: Zone
    instance_id: int

    def __post_init__(self):
        if self.matched and self.reproj_error is None:
            raise ValueError("a matched observation needs a reprojection error")
        if self.reproj_error is not None and self.reproj_error < 0:
            raise ValueError("reprojection error must be non-negative")

    @property
    def in_mask(self) -> bool:
        return self.signed_mask_dist >= 0


@dataclass(frozen=True)
class FusedObservation:
    p_move: Optional[float]
    rule: FusionRule


@dataclass(frozen=True)
class KeypointState:
    state: State
    provenance: Provenance = Provenance.CLASSIFIER


@dataclass
class KeypointResult:
    """Everything the classifier knows about one keypoint of one frame."""

    index: int
    observation: KeypointObservation
    p_s: float
    p_g: Optional[float]
    fused: FusedObservation
    belief: float
    state: KeypointState
    geometric_dynamic: bool = False
    flags: list = field(default_factory=list)


@dataclass(frozen=True)
class FrameState:
    """What the next frame needs from this one: pixels and beliefs by keypoint index."""

    pixels: np.ndarray
    beliefs: np.ndarray


def alpha(z: float) -> float:
    """Reprojection-error threshold (px), decreasing linearly with depth down to 10 m."""
    if z < 0:
        raise NegativeDepth(f"depth must be non-negative, got {z}")
    return min(max(ALPHA_MAX - ALPHA_SLOPE * z, ALPHA_MIN), ALPHA_MAX)


def geometric_moving_probability(err: float, z, sigma: float = 1.0, threshold: Optional[float] = None) -> float:
    """Moving probability from an epipolar reprojection error.

    Errors at or above the depth threshold are treated as certainly moving; below
    it the complement of the peak-normalised Gaussian density is returned.
    """
    if err < 0:
        raise NegativeError(f"reprojection error must be non-negative, got {err}")
    if threshold is None:
        zz = MISSING_DEPTH_FALLBACK if z is None or not math.isfinite(z) else z
        threshold = alpha(zz)
    if err >= threshold:
        return 1.0
    return -math.expm1(-(err * err) / (2.0 * sigma * sigma))


def select_omega(obs: KeypointObservation, omega_uncertain: float = 0.5, omega_reliable: float = 0.1) -> FusionRule:
    if obs.matched:
        if obs.zone is Zone.RELIABLE_OUTSIDE:
            return FusionRule(Source.GEOMETRIC_ONLY)
        if obs.zone is Zone.UNCERTAIN:
            return FusionRule(Source.FUSED, omega_uncertain)
        return FusionRule(Source.FUSED, omega_reliable)
    if obs.zone is Zone.RELIABLE_OUTSIDE:
        return FusionRule(Source.NO_OBSERVATION)
    return FusionRule(Source.SEMANTIC_ONLY)


def fuse(p_g: Optional[float], p_s: float, rule: FusionRule) -> FusedObservation:
    if rule.source is Source.FUSED:
        w = rule.omega
        p = w * p_g + (1.0 - w) * p_s
    elif rule.source is Source.GEOMETRIC_ONLY:
        p = p_g
    elif rule.source is Source.SEMANTIC_ONLY:
        p = p_s
    else:
        p = None
    if p is not None:
        p = min(max(p, 0.0), 1.0)
    return FusedObservation(p, rule)


def predict(bel: float, epsilon: float = 0.1) -> float:
    return (1.0 - epsilon) * bel + epsilon * (1.0 - bel)


def bayes_update(prior: float, obs: FusedObservation, epsilon: float = 0.1) -> float:
    """Two-state discrete Bayes filter step; returns the posterior moving belief."""
    pred = predict(prior, epsilon)
    if obs.p_move is None:
        return pred
    pred = min(max(pred, PROB_CLAMP), 1.0 - PROB_CLAMP)
    p = min(max(obs.p_move, PROB_CLAMP), 1.0 - PROB_CLAMP)
    num = p * pred
    return num / (num + (1.0 - p) * (1.0 - pred))


def classify(bel: float, threshold: float = 0.5) -> KeypointState:
    return KeypointState(State.DYNAMIC if bel >= threshold else State.STATIC)


def classify_frame(
    keypoints: Keypoints,
    prev: Optional[FrameState],
    F,
    field: MaskDistanceField,
    params: ClassifierParams = ClassifierParams(),
) -> list:
    """Classify every keypoint of a frame; returns ``KeypointResult`` in input order.

    ``F`` may be ``None`` (no usable two-view geometry); matched keypoints then get
    no geometric term. Per-keypoint failures are recorded in ``flags``.
    """
    out = []
    n_prev = 0 if prev is None else len(prev.beliefs)
    for i in range(len(keypoints)):
        flags = []
        u, v = float(keypoints.u[i]), float(keypoints.v[i])
        z = float(keypoints.z[i])
        depth = z if math.isfinite(z) and z > 0 else None
        if depth is None:
            flags.append("missing_depth")

        link = int(keypoints.match[i])
        if link < 0:
            link = None
        elif link >= n_prev:
            flags.append("invalid_match_link")
            link = None

        try:
            d = field.at((u, v))
            inst = field.instance_at((u, v)) if d >= 0 else 0
        except OutOfBounds:
            flags.append("out_of_bounds")
            d, inst = -math.inf, 0
        sp = semantic_moving_probability(d, depth, params.fixed_beta)

        err = None
        if link is not None and F is not None:
            q = prev.pixels[link]
            try:
                err = reprojection_error(F, q, (u, v))
            except DegenerateLine:
                flags.append("degenerate_epipolar_line")

        obs = KeypointObservation(
            pixel=(u, v), depth=depth, matched=err is not None, match_link=link,
            reproj_error=err, signed_mask_dist=d, zone=sp.zone, instance_id=inst,
        )
        p_g = None
        geo_dyn = False
        if err is not None:
            p_g = geometric_moving_probability(err, depth, params.sigma, params.fixed_alpha)
            geo_dyn = p_g == 1.0
        rule = select_omega(obs, params.omega_uncertain, params.omega_reliable)
        fused = fuse(p_g, sp.value, rule)

        if link is not None:
            bel = bayes_update(float(prev.beliefs[link]), fused, params.epsilon)
        elif fused.p_move is None:
            # fresh track with nothing observed: start from the outside-mask semantic
            # probability instead of the uninformative prior, which would tie to Dynamic
            bel = sp.value
        else:
            bel = bayes_update(params.new_track_prior, fused, 0.0)
        out.append(KeypointResult(
            index=i, observation=obs, p_s=sp.value, p_g=p_g, fused=fused,
            belief=bel, state=classify(bel, params.decision_threshold),
            geometric_dynamic=geo_dyn, flags=flags,
        ))
    return out


def frame_state(keypoints: Keypoints, results: Sequence[KeypointResult]) -> FrameState:
    return FrameState(keypoints.pixels, np.array([r.belief for r in results], dtype=float))
