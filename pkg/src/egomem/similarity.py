"""Visual and spatial similarity scores used by re-identification and retrieval.

Visual score fuses the two appearance channels with fixed weights
(0.15 / 0.85).  Spatial scores are computed from axis-aligned box volumes:
clamped per-axis overlaps give the intersection volume, then

    IoU     = V_inter / V_union
    MaxIoS  = max(V_inter / V_a, V_inter / V_b)
    VolSim  = min(V_a, V_b) / max(V_a, V_b)

Zero-volume boxes (planar lifts happen; see the degenerate-lift failure
mode of 2D textures) use conventions that keep symmetry and the [0, 1]
bound: a flat box inside the other scores MaxIoS 1, otherwise a zero-volume
operand contributes ratio 0; VolSim is 1 when both volumes vanish and 0
when exactly one does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .geometry import Box3D

CLIP_WEIGHT = 0.15
DINO_WEIGHT = 0.85

_UNIT_NORM_TOL = 1e-4


def _as_unit(vec, name: str) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector")
    n = np.linalg.norm(v)
    if abs(n - 1.0) > _UNIT_NORM_TOL:
        raise ValueError(f"{name} norm {n} not within {_UNIT_NORM_TOL} of 1")
    return v


@dataclass
class FeaturePair:
    """Unit-norm appearance embeddings for the two channels."""

    chan_clip: np.ndarray
    chan_dino: np.ndarray

    def __init__(self, chan_clip, chan_dino):
        self.chan_clip = _as_unit(chan_clip, "chan_clip")
        self.chan_dino = _as_unit(chan_dino, "chan_dino")

    def __eq__(self, other):
        return (isinstance(other, FeaturePair)
                and np.array_equal(self.chan_clip, other.chan_clip)
                and np.array_equal(self.chan_dino, other.chan_dino))


def visual_similarity(a: FeaturePair, b: FeaturePair,
                      clip_weight: float = CLIP_WEIGHT,
                      dino_weight: float = DINO_WEIGHT) -> float:
    """Weighted cosine over both channels.  Inputs are unit-norm by
    contract, so the cosine is a plain dot product."""
    if a.chan_clip.shape != b.chan_clip.shape:
        raise DimensionMismatch(
            f"clip dims differ: {a.chan_clip.shape} vs {b.chan_clip.shape}")
    if a.chan_dino.shape != b.chan_dino.shape:
        raise DimensionMismatch(
            f"dino dims differ: {a.chan_dino.shape} vs {b.chan_dino.shape}")
    return (clip_weight * float(a.chan_clip @ b.chan_clip)
            + dino_weight * float(a.chan_dino @ b.chan_dino))


def intersection_volume(a: Box3D, b: Box3D) -> float:
    overlap = np.minimum(a.max, b.max) - np.maximum(a.min, b.min)
    return float(np.prod(np.maximum(overlap, 0.0)))


def _contains(outer: Box3D, inner: Box3D) -> bool:
    return bool(np.all(inner.min >= outer.min) and np.all(inner.max <= outer.max))


def spatial_iou(a: Box3D, b: Box3D) -> float:
    v_inter = intersection_volume(a, b)
    v_union = a.volume() + b.volume() - v_inter
    if v_union <= 0.0:
        return 0.0
    return v_inter / v_union


def spatial_maxios(a: Box3D, b: Box3D) -> float:
    v_a, v_b = a.volume(), b.volume()
    v_inter = intersection_volume(a, b)

    def ios(v_inter: float, v_own: float, own: Box3D, other: Box3D) -> float:
        if v_own > 0.0:
            return v_inter / v_own
        # Flat box: fully inside the other counts as total containment.
        return 1.0 if _contains(other, own) else 0.0

    return max(ios(v_inter, v_a, a, b), ios(v_inter, v_b, b, a))


def spatial_vol_sim(a: Box3D, b: Box3D) -> float:
    v_a, v_b = a.volume(), b.volume()
    hi = max(v_a, v_b)
    if hi == 0.0:
        return 1.0
    return min(v_a, v_b) / hi
