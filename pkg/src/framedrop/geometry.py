"""Box types, camera projection and overlap measures.

Coordinates follow the KITTI camera frame: x right, y down, z forward, meters.
``Box3D.location`` is the bottom-face center, exactly as stored in KITTI label
files, so boxes survive a text round trip without arithmetic on the fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError

ASSOCIATION_METRICS = ("bev-iou", "centroid-distance")

# corners closer than this to the image plane are discarded before projection
MIN_PROJECTION_DEPTH = 0.1


def wrap_angle(angle: float) -> float:
    """Map an angle to (-pi, pi]; values already in range are returned unchanged."""
    if -math.pi < angle <= math.pi:
        return angle
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Box2D:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate 2D box {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max])


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box.

    ``location`` is the bottom-face center (KITTI convention), ``dims`` is
    (height, width, length) and ``yaw`` the rotation about the camera y axis.
    """

    location: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "location", tuple(float(v) for v in self.location))
        object.__setattr__(self, "dims", tuple(float(v) for v in self.dims))
        if len(self.location) != 3 or len(self.dims) != 3:
            raise ValueError("location and dims must have three components")
        if not all(d > 0.0 for d in self.dims):
            raise ValueError(f"box dims must be strictly positive, got {self.dims}")
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @classmethod
    def from_center(cls, center, dims, yaw=0.0) -> "Box3D":
        """Build a box from its geometric center instead of the bottom-face center."""
        x, y, z = center
        return cls((x, y + dims[0] / 2.0, z), dims, yaw)

    @property
    def height(self) -> float:
        return self.dims[0]

    @property
    def width(self) -> float:
        return self.dims[1]

    @property
    def length(self) -> float:
        return self.dims[2]

    @property
    def center(self) -> np.ndarray:
        """Geometric center (the location is lifted by half the height)."""
        x, y, z = self.location
        return np.array([x, y - self.height / 2.0, z])

    def corners(self) -> np.ndarray:
        """The 8 corners as an (8, 3) array; the first four form the bottom face."""
        h, w, l = self.dims
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        xs = np.array([l, l, -l, -l, l, l, -l, -l]) / 2.0
        ys = np.array([0.0, 0.0, 0.0, 0.0, -h, -h, -h, -h])
        zs = np.array([w, -w, -w, w, w, -w, -w, w]) / 2.0
        rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        return (rot @ np.vstack([xs, ys, zs])).T + np.asarray(self.location)

    def footprint(self) -> np.ndarray:
        """Bird's-eye-view footprint as a counter-clockwise (4, 2) polygon in (x, z)."""
        pts = self.corners()[:4][:, [0, 2]]
        if _signed_area(pts) < 0:
            pts = pts[::-1]
        return pts


@dataclass(frozen=True, eq=False)
class Calibration:
    projection: np.ndarray
    rectification: np.ndarray = field(default_factory=lambda: np.eye(3))
    lidar_to_cam: np.ndarray = field(default_factory=lambda: np.hstack([np.eye(3), np.zeros((3, 1))]))
    image_size: tuple[int, int] = (1242, 375)

    def __post_init__(self):
        p = np.asarray(self.projection, dtype=float)
        r = np.asarray(self.rectification, dtype=float)
        t = np.asarray(self.lidar_to_cam, dtype=float)
        if p.shape != (3, 4) or r.shape != (3, 3) or t.shape != (3, 4):
            raise ValueError("calibration matrices must be 3x4, 3x3 and 3x4")
        if np.linalg.matrix_rank(p) != 3:
            raise ValueError("projection matrix must have rank 3")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise ValueError("rectification must be orthonormal")
        object.__setattr__(self, "projection", p)
        object.__setattr__(self, "rectification", r)
        object.__setattr__(self, "lidar_to_cam", t)

    @property
    def focal_length(self) -> float:
        return float(self.projection[0, 0])

    @classmethod
    def pinhole(cls, focal=720.0, image_size=(1242, 375), principal=None) -> "Calibration":
        w, h = image_size
        cx, cy = principal if principal is not None else (w / 2.0, h / 2.0)
        proj = np.array([[focal, 0.0, cx, 0.0], [0.0, focal, cy, 0.0], [0.0, 0.0, 1.0, 0.0]])
        return cls(proj, image_size=tuple(image_size))

    def project_points(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project (N, 3) camera-frame points; returns pixel coords (N, 2) and depths (N,)."""
        homo = np.hstack([pts, np.ones((len(pts), 1))]) @ self.projection.T
        depth = homo[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = homo[:, :2] / depth[:, None]
        return uv, depth


def project_box3d(box: Box3D, calib: Calibration) -> Optional[Box2D]:
    """Image-clipped axis-aligned hull of the projected box corners.

    Corners with depth below ``MIN_PROJECTION_DEPTH`` are dropped. Returns None
    when no corner is in front of the camera or the clipped hull is empty.
    """
    uv, depth = calib.project_points(box.corners())
    uv = uv[depth > MIN_PROJECTION_DEPTH]
    if len(uv) == 0:
        return None
    w, h = calib.image_size
    x0, y0 = np.clip(uv.min(axis=0), 0.0, (w, h))
    x1, y1 = np.clip(uv.max(axis=0), 0.0, (w, h))
    if not (x0 < x1 and y0 < y1):
        return None
    return Box2D(float(x0), float(y0), float(x1), float(y1))


def iou_2d(a: Box2D, b: Box2D) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(a: Sequence[Box2D], b: Sequence[Box2D]) -> np.ndarray:
    """Pairwise 2D IoU, shape (len(a), len(b))."""
    if not a or not b:
        return np.zeros((len(a), len(b)))
    A = np.array([x.as_array() for x in a])
    B = np.array([x.as_array() for x in b])
    iw = np.minimum(A[:, None, 2], B[None, :, 2]) - np.maximum(A[:, None, 0], B[None, :, 0])
    ih = np.minimum(A[:, None, 3], B[None, :, 3]) - np.maximum(A[:, None, 1], B[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (A[:, 2] - A[:, 0]) * (A[:, 3] - A[:, 1])
    area_b = (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by the counter-clockwise convex ``clip``."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        inp, out = out, []

        def side(p):
            return (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax)

        # interpolate by signed distances: well defined even for nearly collinear edges
        prev = inp[-1]
        s_prev = side(prev)
        for cur in inp:
            s_cur = side(cur)
            if (s_cur >= 0.0) != (s_prev >= 0.0):
                t = s_prev / (s_prev - s_cur)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            if s_cur >= 0.0:
                out.append(cur)
            prev, s_prev = cur, s_cur
    return np.array(out, dtype=float).reshape(-1, 2)


def bev_iou(a: Box3D, b: Box3D) -> float:
    pa, pb = a.footprint(), b.footprint()
    inter_poly = clip_convex(pa, pb)
    inter = abs(_signed_area(inter_poly)) if len(inter_poly) >= 3 else 0.0
    union = abs(_signed_area(pa)) + abs(_signed_area(pb)) - inter
    return inter / union if union > 0.0 else 0.0


def overlap_3d(a: Box3D, b: Box3D, metric: str) -> float:
    """Association measure between two 3D boxes.

    ``bev-iou`` is a similarity in [0, 1]; ``centroid-distance`` is a distance in
    meters, so callers negate it when larger must mean better.
    """
    if metric == "bev-iou":
        return bev_iou(a, b)
    if metric == "centroid-distance":
        return float(np.linalg.norm(a.center - b.center))
    raise ConfigError(f"unknown association metric {metric!r}; expected one of {ASSOCIATION_METRICS}", "metric")
