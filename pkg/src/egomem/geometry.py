"""Pinhole camera model, depth unprojection, 2D->3D lifting, box projection
and visibility testing.

COORDINATE CONVENTIONS
======================
World frame: right-handed, meters.  The gravity ("up") axis is declared in
the episode manifest; nothing in this module depends on it.

Camera frame: standard computer vision.
  - X right, Y down, Z forward (optical axis, into the scene).

Image frame: origin top-left, u right (columns), v down (rows), pixels.
Integer pixel indices address ray directions directly: pixel (row v, col u)
looks along ((u - cx)/fx, (v - cy)/fy, 1) in the camera frame, so
unproject(project(p)) is exact.

Pose is world-from-camera: p_world = R @ p_cam + t, with R from a unit
quaternion stored (w, x, y, z).

Depth maps store camera-frame Z in meters, row-major, float32 on disk.
0.0 is the invalid-pixel sentinel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .errors import InsufficientDepth

_QUAT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class Pose:
    """World-from-camera rigid transform."""

    rotation: Tuple[float, float, float, float]  # unit quaternion (w, x, y, z)
    translation: Tuple[float, float, float]      # meters, world frame

    def __post_init__(self):
        n = math.sqrt(sum(c * c for c in self.rotation))
        if abs(n - 1.0) > _QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {n} not within {_QUAT_NORM_TOL} of 1")

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.rotation
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ], dtype=np.float64)

    def camera_center(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=np.float64)

    @staticmethod
    def from_matrix(rot: np.ndarray, trans) -> "Pose":
        """Build a pose from a 3x3 rotation matrix (Shepperd's method)."""
        m = np.asarray(rot, dtype=np.float64)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = math.sqrt(tr + 1.0) * 2
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        n = math.sqrt(w * w + x * x + y * y + z * z)
        q = (w / n, x / n, y / n, z / n)
        t = tuple(float(v) for v in np.asarray(trans, dtype=np.float64))
        return Pose(rotation=q, translation=t)


class DepthMap:
    """Row-major depth image in meters; 0.0 marks invalid pixels."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float32)
        if values.ndim != 2:
            raise ValueError("depth map must be 2-D (height, width)")
        if not np.all(np.isfinite(values)):
            raise ValueError("depth values must be finite")
        if np.any(values < 0):
            raise ValueError("depth values must be >= 0")
        self.values = values

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class Box3D:
    """Axis-aligned world-frame box."""

    min: np.ndarray
    max: np.ndarray

    def __init__(self, min, max):
        self.min = np.asarray(min, dtype=np.float64)
        self.max = np.asarray(max, dtype=np.float64)
        if self.min.shape != (3,) or self.max.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        if np.any(self.min > self.max):
            raise ValueError(f"box min {self.min} exceeds max {self.max}")

    def volume(self) -> float:
        return float(np.prod(self.max - self.min))

    def center(self) -> np.ndarray:
        return (self.min + self.max) / 2.0

    def corners(self) -> np.ndarray:
        """All 8 corners, shape (8, 3)."""
        mn, mx = self.min, self.max
        return np.array([
            [mn[0], mn[1], mn[2]], [mn[0], mn[1], mx[2]],
            [mn[0], mx[1], mn[2]], [mn[0], mx[1], mx[2]],
            [mx[0], mn[1], mn[2]], [mx[0], mn[1], mx[2]],
            [mx[0], mx[1], mn[2]], [mx[0], mx[1], mx[2]],
        ], dtype=np.float64)

    def __eq__(self, other):
        return (isinstance(other, Box3D)
                and np.array_equal(self.min, other.min)
                and np.array_equal(self.max, other.max))


@dataclass
class Detection2D:
    """A 2D detection; mask (if present) is a boolean window over the
    integer pixel rectangle of bbox2d."""

    category: str
    bbox2d: Tuple[float, float, float, float]  # (x0, y0, x1, y1) pixels
    confidence: float = 1.0
    mask: Optional[np.ndarray] = None

    def validate(self, width: int, height: int):
        x0, y0, x1, y1 = self.bbox2d
        if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
            raise ValueError(f"bbox2d {self.bbox2d} outside {width}x{height} image")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.mask is not None:
            r0, c0, r1, c1 = pixel_window(self.bbox2d)
            if self.mask.shape != (r1 - r0, c1 - c0):
                raise ValueError("mask shape does not match bbox pixel window")


class Visibility(Enum):
    VISIBLE = "Visible"
    OCCLUDED = "Occluded"
    OUT_OF_VIEW = "OutOfView"


@dataclass(frozen=True)
class VisibilityStatus:
    kind: Visibility
    region: Optional[Tuple[float, float, float, float]] = None  # (x0, y0, x1, y1)

    def __post_init__(self):
        if self.kind is Visibility.OUT_OF_VIEW:
            if self.region is not None:
                raise ValueError("OutOfView carries no region")
        else:
            if self.region is None:
                raise ValueError(f"{self.kind.value} requires a screen region")
            x0, y0, x1, y1 = self.region
            if not (x0 < x1 and y0 < y1):
                raise ValueError(f"region {self.region} is empty")


OUT_OF_VIEW = VisibilityStatus(Visibility.OUT_OF_VIEW)


def pixel_window(bbox2d) -> Tuple[int, int, int, int]:
    """Integer pixel rectangle (r0, c0, r1, c1) covered by a float bbox."""
    x0, y0, x1, y1 = bbox2d
    return (int(math.floor(y0)), int(math.floor(x0)),
            int(math.ceil(y1)), int(math.ceil(x1)))


def unproject_pixels(rows: np.ndarray, cols: np.ndarray, depths: np.ndarray,
                     pose: Pose, intr: CameraIntrinsics) -> np.ndarray:
    """Unproject pixel (row, col, z) triples to world points, shape (N, 3)."""
    z = np.asarray(depths, dtype=np.float64)
    x = (np.asarray(cols, dtype=np.float64) - intr.cx) * z / intr.fx
    y = (np.asarray(rows, dtype=np.float64) - intr.cy) * z / intr.fy
    pts_cam = np.stack([x, y, z], axis=-1)
    return pts_cam @ pose.rotation_matrix().T + pose.camera_center()


def project_points(points: np.ndarray, pose: Pose, intr: CameraIntrinsics):
    """Project world points; returns (u, v, z_cam) arrays (no clipping)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = (pts - pose.camera_center()) @ pose.rotation_matrix()
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * cam[:, 0] / z + intr.cx
        v = intr.fy * cam[:, 1] / z + intr.cy
    return u, v, z


def lift_detection(det: Detection2D, depth: DepthMap, pose: Pose,
                   intr: CameraIntrinsics, trim: float = 0.10,
                   min_pixels: int = 10) -> Box3D:
    """Lift a 2D detection to a world-frame axis-aligned box.

    Uses the detection mask when present, otherwise every pixel of bbox2d.
    Valid depth pixels are unprojected to world points, sorted by Euclidean
    distance to the camera center, and floor(trim*n) points are dropped from
    each end before taking the axis-aligned bounds of the survivors.

    Raises InsufficientDepth when fewer than min_pixels valid pixels exist;
    such a detection must be skipped, not inserted into memory.
    """
    det.validate(depth.width, depth.height)
    r0, c0, r1, c1 = pixel_window(det.bbox2d)
    r0, c0 = max(r0, 0), max(c0, 0)
    r1, c1 = min(r1, depth.height), min(c1, depth.width)
    window = depth.values[r0:r1, c0:c1]
    if det.mask is not None:
        selected = det.mask[: r1 - r0, : c1 - c0]
    else:
        selected = np.ones(window.shape, dtype=bool)
    valid = selected & (window > 0)
    n_valid = int(np.count_nonzero(valid))
    if n_valid < min_pixels:
        raise InsufficientDepth(
            f"{n_valid} valid depth pixels under detection (need {min_pixels})")

    rr, cc = np.nonzero(valid)
    pts = unproject_pixels(rr + r0, cc + c0, window[rr, cc], pose, intr)
    dist = np.linalg.norm(pts - pose.camera_center(), axis=1)
    order = np.argsort(dist, kind="stable")
    k = int(math.floor(trim * n_valid))
    kept = order[k: n_valid - k]
    if kept.size == 0:
        kept = order[n_valid // 2: n_valid // 2 + 1]
    survivors = pts[kept]
    return Box3D(survivors.min(axis=0), survivors.max(axis=0))


def project_box(box: Box3D, pose: Pose, intr: CameraIntrinsics) -> VisibilityStatus:
    """Project the 8 corners to the image (no occlusion test).

    OutOfView when no corner projects in front of the camera inside the
    image; otherwise Visible with the clipped bounding rectangle of the
    corners that are in front.
    """
    u, v, z = project_points(box.corners(), pose, intr)
    front = z > 1e-9
    if not np.any(front):
        return OUT_OF_VIEW
    uf, vf = u[front], v[front]
    inside = (uf >= 0) & (uf < intr.width) & (vf >= 0) & (vf < intr.height)
    if not np.any(inside):
        return OUT_OF_VIEW
    x0 = max(0.0, float(uf.min()))
    y0 = max(0.0, float(vf.min()))
    x1 = min(float(intr.width), float(uf.max()))
    y1 = min(float(intr.height), float(vf.max()))
    if not (x0 < x1 and y0 < y1):
        return OUT_OF_VIEW
    return VisibilityStatus(Visibility.VISIBLE, (x0, y0, x1, y1))


def ray_box_depth(box: Box3D, rows: np.ndarray, cols: np.ndarray,
                  pose: Pose, intr: CameraIntrinsics) -> np.ndarray:
    """Camera-Z depth of the nearest box surface along each pixel ray.

    Rays are parameterized so the parameter equals camera-frame Z, which
    makes the result directly comparable to depth-map values.  Pixels whose
    rays miss the box get NaN.  Degenerate zero-volume boxes fall back to
    the depth of the box center for every pixel.
    """
    if np.any(box.max - box.min <= 0):
        _, _, zc = project_points(box.center()[None, :], pose, intr)
        return np.full(len(rows), zc[0], dtype=np.float64)
    d_cam = np.stack([
        (np.asarray(cols, np.float64) - intr.cx) / intr.fx,
        (np.asarray(rows, np.float64) - intr.cy) / intr.fy,
        np.ones(len(rows)),
    ], axis=-1)
    d_world = d_cam @ pose.rotation_matrix().T
    origin = pose.camera_center()
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (box.min - origin) / d_world
        t2 = (box.max - origin) / d_world
    # Axis-parallel rays: inside the slab -> (-inf, inf), outside -> miss.
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    par = d_world == 0.0
    if np.any(par):
        inside = (origin >= box.min) & (origin <= box.max)
        lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
    t_near = lo.max(axis=1)
    t_far = hi.min(axis=1)
    eps = 1e-9
    hit = (t_far >= t_near) & (t_far > eps)
    entry = np.where(t_near > eps, t_near, t_far)
    return np.where(hit, entry, np.nan)


def _sample_grid(r0: int, c0: int, r1: int, c1: int, min_samples: int):
    """Pixel sample coordinates: all pixels if few, else a uniform grid of
    at least min_samples positions."""
    h, w = r1 - r0, c1 - c0
    if h * w <= min_samples:
        rr, cc = np.mgrid[r0:r1, c0:c1]
        return rr.ravel(), cc.ravel()
    base = max(1, int(math.isqrt(min_samples)))
    nc = min(w, base)
    nr = min(h, math.ceil(min_samples / nc))
    if nr * nc < min_samples:
        nc = min(w, math.ceil(min_samples / nr))
    cols = np.rint(np.linspace(c0, c1 - 1, nc)).astype(int)
    rows = np.rint(np.linspace(r0, r1 - 1, nr)).astype(int)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return rr.ravel(), cc.ravel()


def check_visibility(box: Box3D, depth: DepthMap, pose: Pose,
                     intr: CameraIntrinsics, margin: float = 0.10,
                     occluded_frac: float = 0.5,
                     min_samples: int = 64) -> VisibilityStatus:
    """Occlusion-aware visibility of a box against an observed depth map.

    Samples the projected region and counts a sample as blocked when the
    observed depth plus margin is still nearer than the box surface along
    that ray.  Samples with invalid (zero) depth or rays that miss the box
    carry no evidence and are excluded.  Occluded when the blocked fraction
    strictly exceeds occluded_frac.
    """
    status = project_box(box, pose, intr)
    if status.kind is Visibility.OUT_OF_VIEW:
        return status
    x0, y0, x1, y1 = status.region
    r0, c0, r1, c1 = pixel_window((x0, y0, x1, y1))
    r0, c0 = max(r0, 0), max(c0, 0)
    r1, c1 = min(r1, depth.height), min(c1, depth.width)
    if r1 <= r0 or c1 <= c0:
        return OUT_OF_VIEW
    rows, cols = _sample_grid(r0, c0, r1, c1, min_samples)
    box_z = ray_box_depth(box, rows, cols, pose, intr)
    observed = depth.values[rows, cols].astype(np.float64)
    informative = ~np.isnan(box_z) & (observed > 0)
    n = int(np.count_nonzero(informative))
    if n == 0:
        return VisibilityStatus(Visibility.VISIBLE, status.region)
    blocked = np.count_nonzero(observed[informative] + margin < box_z[informative])
    if blocked / n > occluded_frac:
        return VisibilityStatus(Visibility.OCCLUDED, status.region)
    return VisibilityStatus(Visibility.VISIBLE, status.region)
