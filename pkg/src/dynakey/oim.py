"""Object Interaction Module.

Static keypoints lying next to a human (in image position and depth) are
re-labelled dynamic when the geometrically dynamic keypoints around them,
weighted by depth agreement, are centred close enough to them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, MissingDepth, NegativeDepth, NoNeighbors
from .masks import MaskImage
from .motion import KeypointResult, KeypointState, Provenance, State

RHO = 0.7
OIM_BELIEF_FLOOR = 0.75


@dataclass(frozen=True)
class OimThresholds:
    rho: float = RHO
    delta_intercept: float = 48.0
    delta_slope: float = 4.0
    delta_range: tuple = (11.0, 48.0)
    gamma_intercept: float = 28.0
    gamma_slope: float = 1.8
    gamma_range: tuple = (10.0, 28.0)

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")

    def delta(self, z: float) -> float:
        return _linear_clamped(z, self.delta_intercept, self.delta_slope, self.delta_range)

    def gamma(self, z: float) -> float:
        return _linear_clamped(z, self.gamma_intercept, self.gamma_slope, self.gamma_range)


def _linear_clamped(z, intercept, slope, bounds):
    if z < 0:
        raise NegativeDepth(f"depth must be non-negative, got {z}")
    lo, hi = bounds
    return min(max(intercept - slope * z, lo), hi)


def delta_threshold(z: float) -> float:
    """Neighbourhood radius (px) for supporting dynamic keypoints."""
    return OimThresholds().delta(z)


def gamma_threshold(z: float) -> float:
    """Maximum distance (px) between a keypoint and the centroid of its dynamic support."""
    return OimThresholds().gamma(z)


@dataclass(frozen=True)
class InteractionZone:
    """Per-pixel zone membership and the depth of the human each pixel is attached to.

    ``ref_depth`` is NaN wherever no human mask is within reach.
    """

    member: np.ndarray
    ref_depth: np.ndarray
    rho: float = RHO

    @classmethod
    def empty(cls, shape, rho=RHO) -> "InteractionZone":
        return cls(np.zeros(shape, dtype=bool), np.full(shape, np.nan), rho)

    def contains(self, pixel, depth: Optional[float] = None) -> bool:
        col = int(math.floor(pixel[0] + 0.5))
        row = int(math.floor(pixel[1] + 0.5))
        h, w = self.member.shape
        if not (0 <= row < h and 0 <= col < w):
            return False
        if depth is None or not math.isfinite(depth):
            return bool(self.member[row, col])
        ref = self.ref_depth[row, col]
        return bool(np.isfinite(ref) and abs(depth - ref) < self.rho)


def human_depths(mask: MaskImage, depth: np.ndarray) -> dict:
    """Median valid depth of every mask instance."""
    out = {}
    for n in mask.instances:
        vals = depth[(mask.ids == n) & np.isfinite(depth) & (depth > 0)]
        if vals.size:
            out[n] = float(np.median(vals))
    return out


def build_interaction_zone(mask: MaskImage, depth, thresholds: OimThresholds = OimThresholds()) -> InteractionZone:
    depth = np.asarray(depth, dtype=float)
    if depth.shape != mask.ids.shape:
        raise DimensionMismatch(f"mask {mask.ids.shape} and depth {depth.shape} differ")
    shape = depth.shape
    best = np.full(shape, np.inf)
    ref = np.full(shape, np.nan)
    h, w = shape
    for n, zh in human_depths(mask, depth).items():
        radius = thresholds.delta(zh)
        rows, cols = np.nonzero(mask.ids == n)
        # nothing outside the bounding box grown by the radius can be in reach
        pad = int(math.ceil(radius)) + 1
        r0, r1 = max(rows.min() - pad, 0), min(rows.max() + pad + 1, h)
        c0, c1 = max(cols.min() - pad, 0), min(cols.max() + pad + 1, w)
        win = (slice(r0, r1), slice(c0, c1))
        dist = ndimage.distance_transform_edt(mask.ids[win] != n)
        b = best[win]
        reach = (dist < radius) & (dist < b)
        b[reach] = dist[reach]
        ref[win][reach] = zh
    with np.errstate(invalid="ignore"):
        member = np.isfinite(ref) & (np.abs(depth - ref) < thresholds.rho)
    return InteractionZone(member, ref, thresholds.rho)


@dataclass(frozen=True)
class DynamicNeighbor:
    pixel: tuple
    depth: float
    gap: float
    distance: float
    index: int


def find_supporting_dynamics(p, z, dynamics: Sequence, thresholds: OimThresholds = OimThresholds()) -> list:
    """Dynamic keypoints within the depth-dependent radius and the depth gate of ``p``.

    ``dynamics`` holds ``(pixel, depth)`` pairs. Result is sorted by pixel distance,
    ties by input position.
    """
    if z is None or not math.isfinite(z):
        raise MissingDepth("query keypoint has no depth")
    radius = thresholds.delta(z)
    found = []
    for k, (pd, zd) in enumerate(dynamics):
        if zd is None or not math.isfinite(zd):
            continue
        dist = math.hypot(pd[0] - p[0], pd[1] - p[1])
        gap = abs(z - zd)
        if dist < radius and gap < thresholds.rho:
            found.append(DynamicNeighbor((float(pd[0]), float(pd[1])), float(zd), gap, dist, k))
    found.sort(key=lambda nb: (nb.distance, nb.index))
    return found


def weighted_centroid(neighbors: Sequence[DynamicNeighbor], rho: float = RHO) -> np.ndarray:
    if not neighbors:
        raise NoNeighbors("centroid needs at least one supporting neighbour")
    pts = np.array([nb.pixel for nb in neighbors], dtype=float)
    w = np.array([(rho - nb.gap) / rho for nb in neighbors])
    return (w[:, None] * pts).sum(axis=0) / w.sum()


def dynamics_of(results: Sequence[KeypointResult]) -> list:
    """Snapshot of geometrically dynamic keypoints as ``(pixel, depth)`` pairs."""
    return [
        (r.observation.pixel, r.observation.depth)
        for r in results
        if r.geometric_dynamic and r.observation.depth is not None
    ]


def apply_oim(results: Sequence[KeypointResult], zone: InteractionZone,
              dynamics: Optional[Sequence] = None,
              thresholds: OimThresholds = OimThresholds()) -> list:
    """Single pass over the frame; returns the indices of flipped keypoints.

    Only static, unsegmented keypoints with depth inside the zone are examined.
    The dynamic snapshot is taken before any flip, so flips never recruit.
    """
    if dynamics is None:
        dynamics = dynamics_of(results)
    flipped = []
    for r in results:
        obs = r.observation
        if r.state.state is not State.STATIC or obs.in_mask or obs.depth is None:
            continue
        if not zone.contains(obs.pixel, obs.depth):
            continue
        support = find_supporting_dynamics(obs.pixel, obs.depth, dynamics, thresholds)
        if not support:
            continue
        G = weighted_centroid(support, thresholds.rho)
        if math.hypot(G[0] - obs.pixel[0], G[1] - obs.pixel[1]) < thresholds.gamma(obs.depth):
            flipped.append(r.index)
    chosen = set(flipped)
    for r in results:
        if r.index in chosen:
            r.state = KeypointState(State.DYNAMIC, Provenance.OIM)
            r.belief = max(r.belief, OIM_BELIEF_FLOOR)
    return flipped
