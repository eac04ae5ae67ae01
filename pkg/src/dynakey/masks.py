"""Human masks, signed edge-distance fields and the semantic moving probability."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .errors import NegativeDepth, OutOfBounds

BETA_MIN, BETA_MAX, BETA_SLOPE = 0.05, 0.25, 0.02
RELIABLE_LEVEL = 0.75
MISSING_DEPTH_FALLBACK = 5.0
_ZONE_TOL = 1e-12


class Zone(str, enum.Enum):
    RELIABLE_INSIDE = "ReliableInside"
    UNCERTAIN = "Uncertain"
    RELIABLE_OUTSIDE = "ReliableOutside"


@dataclass(frozen=True)
class MaskImage:
    """Instance-id grid; 0 is background, n >= 1 is human mask n."""

    ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim != 2 or ids.size == 0:
            raise ValueError("mask must be a nonempty 2-D grid")
        if np.any(ids < 0):
            raise ValueError("instance ids must be non-negative")
        ids = ids.astype(np.int32)
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def empty(cls, width: int, height: int) -> "MaskImage":
        return cls(np.zeros((height, width), dtype=np.int32))

    @classmethod
    def from_bits(cls, bits) -> "MaskImage":
        return cls(np.asarray(bits, dtype=bool).astype(np.int32))

    @property
    def bits(self) -> np.ndarray:
        return self.ids > 0

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def instances(self) -> list:
        return [int(i) for i in np.unique(self.ids) if i > 0]


@dataclass(frozen=True)
class MaskDistanceField:
    """Signed distance (px) to the nearest mask-edge pixel: + inside, - outside, 0 on the edge.

    Frames without any mask hold ``-inf`` everywhere.
    """

    signed: np.ndarray
    nearest_id: np.ndarray

    @property
    def shape(self):
        return self.signed.shape

    def index(self, pixel):
        u, v = float(pixel[0]), float(pixel[1])
        col, row = int(math.floor(u + 0.5)), int(math.floor(v + 0.5))
        h, w = self.signed.shape
        if not (0 <= row < h and 0 <= col < w):
            raise OutOfBounds(f"pixel ({u}, {v}) outside {w}x{h} image")
        return row, col

    def at(self, pixel) -> float:
        return float(self.signed[self.index(pixel)])

    def instance_at(self, pixel) -> int:
        return int(self.nearest_id[self.index(pixel)])


def edge_pixels(bits: np.ndarray) -> np.ndarray:
    """Mask pixels with at least one in-bounds non-mask 4-neighbour."""
    bits = np.asarray(bits, dtype=bool)
    padded = np.pad(bits, 1, constant_values=True)
    outside_nb = (
        ~padded[:-2, 1:-1] | ~padded[2:, 1:-1] | ~padded[1:-1, :-2] | ~padded[1:-1, 2:]
    )
    return bits & outside_nb


def build_distance_field(mask: MaskImage) -> MaskDistanceField:
    ids = mask.ids
    bits = ids > 0
    if not bits.any():
        return MaskDistanceField(np.full(ids.shape, -np.inf), np.zeros_like(ids))
    edge = edge_pixels(bits)
    if not edge.any():
        # mask covers the whole image: no boundary to be uncertain about
        return MaskDistanceField(np.full(ids.shape, np.inf), ids.copy())
    dist, (ri, ci) = ndimage.distance_transform_edt(~edge, return_indices=True)
    signed = np.where(bits, dist, -dist)
    nearest = np.where(bits, ids, ids[ri, ci])
    return MaskDistanceField(signed, nearest)


def beta(z: float) -> float:
    """Depth-adaptive impact factor, linear in depth and saturating at 10 m."""
    if z < 0:
        raise NegativeDepth(f"depth must be non-negative, got {z}")
    return min(max(BETA_MIN + BETA_SLOPE * z, BETA_MIN), BETA_MAX)


def zone_of(p: float) -> Zone:
    if max(p, 1.0 - p) < RELIABLE_LEVEL - _ZONE_TOL:
        return Zone.UNCERTAIN
    return Zone.RELIABLE_INSIDE if p > 0.5 else Zone.RELIABLE_OUTSIDE


def uncertain_half_width(z: float) -> float:
    """Half-width (px) of the uncertain band around a mask edge at depth ``z``."""
    return math.log(3.0) / beta(z)


@dataclass(frozen=True)
class SemanticProbability:
    value: float
    zone: Zone
    depth_imputed: bool = False


def _usable_depth(z):
    if z is None or not np.isfinite(z):
        return MISSING_DEPTH_FALLBACK, True
    return float(z), False


def semantic_moving_probability(signed_dist: float, z, impact=None) -> SemanticProbability:
    """Logistic moving probability from the signed mask distance.

    ``z`` may be ``None`` or NaN for a keypoint without depth; the mid-range
    fallback is then used and reported through ``depth_imputed``. ``impact``
    replaces the depth law with a fixed factor.
    """
    zz, imputed = _usable_depth(z)
    b = beta(zz) if impact is None else impact
    if signed_dist == -math.inf:
        p = 0.0
    else:
        p = float(expit(b * signed_dist))
    return SemanticProbability(p, zone_of(p), imputed)


def mask_flags(field: MaskDistanceField, pixel, z=None):
    """``(in_mask, zone, instance_id)`` for a keypoint at ``pixel`` with depth ``z``.

    The instance id is 0 for pixels outside every mask.
    """
    d = field.at(pixel)
    sp = semantic_moving_probability(d, z)
    inside = d >= 0
    return inside, sp.zone, field.instance_at(pixel) if inside else 0
