"""Synthetic driving scenarios: ground-truth trajectories plus noisy detection streams.

The ego vehicle is static at the camera origin; agents move with piecewise
constant velocities (meters per cycle) in camera coordinates and sit on a
ground plane ``CAMERA_HEIGHT`` below the camera. An agent is visible when it is
alive, outside its occlusion windows and its box center projects into the
image. Every random draw comes from a generator seeded by
``(rng_seed, stream, agent, frame)``, so any single detection can be
reproduced in isolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .geometry import Box2D, Box3D, Calibration, project_box3d, wrap_angle
from .io_kitti import (DEFAULT_CYCLE_TIME, Detection2D, Detection3D, FrameBundle, GroundTruthTrack, LabelRow,
                       SequenceData, observation_angle, type_from_class, write_sequence)

CAMERA_HEIGHT = 1.65
CLASS_DIMS = {"car": (1.5, 1.6, 3.9), "pedestrian": (1.75, 0.6, 0.8), "cyclist": (1.75, 0.6, 1.8)}

# rng stream ids
_LIDAR, _CAMERA, _LIDAR_FP, _CAMERA_FP = 1, 2, 3, 4

_FP_X_RANGE = (-15.0, 15.0)
_FP_Z_RANGE = (5.0, 60.0)


@dataclass
class AgentSpec:
    class_id: str = "car"
    spawn_frame: int = 0
    location: tuple = (0.0, CAMERA_HEIGHT, 20.0)
    yaw: float = 0.0
    velocity: tuple = (0.0, 0.0, 0.0)
    # [frame, vx, vy, vz] rows; the velocity switches at the start of that frame
    velocity_changes: list = field(default_factory=list)
    # [start, end) frame ranges without any detection
    occlusions: list = field(default_factory=list)
    despawn_frame: Optional[int] = None
    dims: Optional[tuple] = None

    def __post_init__(self):
        if self.class_id not in CLASS_DIMS:
            raise ConfigError(f"unknown agent class {self.class_id!r}", "class_id")
        if self.dims is None:
            self.dims = CLASS_DIMS[self.class_id]
        self.location = tuple(self.location)
        self.velocity = tuple(self.velocity)
        self.dims = tuple(self.dims)
        self.occlusions = [tuple(o) for o in self.occlusions]
        self.velocity_changes = sorted((tuple(v) for v in self.velocity_changes), key=lambda v: v[0])

    def occluded(self, frame: int) -> bool:
        return any(a <= frame < b for a, b in self.occlusions)

    def alive(self, frame: int) -> bool:
        return frame >= self.spawn_frame and (self.despawn_frame is None or frame < self.despawn_frame)

    def trajectory(self, duration: int) -> np.ndarray:
        """Bottom-center location for every frame in [0, duration); rows before spawn are unused."""
        pos = np.zeros((duration, 3))
        loc = np.array(self.location, dtype=float)
        vel = np.array(self.velocity, dtype=float)
        changes = {int(c[0]): np.array(c[1:4], dtype=float) for c in self.velocity_changes}
        for k in range(self.spawn_frame, duration):
            if k > self.spawn_frame:
                if k in changes:
                    vel = changes[k]
                loc = loc + vel
            pos[k] = loc
        return pos


@dataclass
class NoiseSpec:
    position_std: float = 0.0
    dims_std: float = 0.0
    yaw_std: float = 0.0
    lidar_recall: float = 1.0
    camera_recall: float = 1.0
    lidar_fp_rate: float = 0.0
    camera_fp_rate: float = 0.0

    def __post_init__(self):
        for name in ("lidar_recall", "camera_recall"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]", name)
        for name in ("position_std", "dims_std", "yaw_std", "lidar_fp_rate", "camera_fp_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative", name)


@dataclass
class ScenarioSpec:
    duration_frames: int
    agents: list = field(default_factory=list)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    rng_seed: int = 0
    sequence_id: str = "0000"
    focal_length: float = 720.0
    image_size: tuple = (1242, 375)
    cycle_time: float = DEFAULT_CYCLE_TIME

    def __post_init__(self):
        self.agents = [a if isinstance(a, AgentSpec) else AgentSpec(**a) for a in self.agents]
        if isinstance(self.noise, dict):
            self.noise = NoiseSpec(**self.noise)
        self.image_size = tuple(self.image_size)
        if self.duration_frames < 1:
            raise ConfigError("duration_frames must be positive", "duration_frames")
        for i, a in enumerate(self.agents):
            if not 0 <= a.spawn_frame < self.duration_frames:
                raise ConfigError(f"agent {i} spawns outside the scenario", f"agents[{i}].spawn_frame")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        data = json.loads(text)
        if not isinstance(data, dict) or "duration_frames" not in data:
            raise ConfigError("scenario document needs a duration_frames field", "duration_frames")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario fields {sorted(unknown)}", sorted(unknown)[0])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"invalid scenario document: {exc}") from None

    def calibration(self) -> Calibration:
        return Calibration.pinhole(self.focal_length, self.image_size)


@dataclass
class Scenario:
    spec: ScenarioSpec
    calib: Calibration
    ground_truth: list          # LabelRow, sorted by (frame, track id)
    frames: list                # FrameBundle, one per frame

    def ground_truth_tracks(self) -> list[GroundTruthTrack]:
        tracks: dict[int, GroundTruthTrack] = {}
        for row in self.ground_truth:
            tracks.setdefault(row.track_id, GroundTruthTrack(row.track_id)).entries.append(row)
        return [tracks[k] for k in sorted(tracks)]

    def as_sequence(self) -> SequenceData:
        return SequenceData(self.spec.sequence_id, self.calib, self.frames, self.ground_truth_tracks())

    def write(self, root) -> None:
        write_sequence(root, self.spec.sequence_id, self.calib, self.ground_truth, self.frames)


def _rng(seed: int, stream: int, agent: int, frame: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, agent, frame])


def _truncation(box: Box3D, calib: Calibration) -> float:
    uv, depth = calib.project_points(box.corners())
    uv = uv[depth > 0.1]
    x0, y0 = uv.min(axis=0)
    x1, y1 = uv.max(axis=0)
    full = (x1 - x0) * (y1 - y0)
    clipped = project_box3d(box, calib)
    if clipped is None or full <= 0:
        return 1.0
    return round(max(0.0, 1.0 - clipped.area / full), 2)


def _visible(box: Box3D, calib: Calibration) -> bool:
    uv, depth = calib.project_points(box.center[None, :])
    w, h = calib.image_size
    return bool(depth[0] > 1.0 and 0.0 <= uv[0, 0] <= w and 0.0 <= uv[0, 1] <= h)


def _perturb(box: Box3D, noise: NoiseSpec, rng: np.random.Generator) -> Box3D:
    loc = np.array(box.location)
    dims = np.array(box.dims)
    yaw = box.yaw
    if noise.position_std > 0:
        loc = loc + rng.normal(0.0, noise.position_std, 3)
    if noise.dims_std > 0:
        dims = np.maximum(dims + rng.normal(0.0, noise.dims_std, 3), 0.1)
    if noise.yaw_std > 0:
        yaw = wrap_angle(yaw + rng.normal(0.0, noise.yaw_std))
    return Box3D(tuple(loc), tuple(dims), yaw)


def _random_box(rng: np.random.Generator, class_id: str = "car") -> Box3D:
    x = rng.uniform(*_FP_X_RANGE)
    z = rng.uniform(*_FP_Z_RANGE)
    return Box3D((x, CAMERA_HEIGHT, z), CLASS_DIMS[class_id], rng.uniform(-math.pi, math.pi))


def generate(spec: ScenarioSpec) -> Scenario:
    """Deterministically expand a spec into ground truth and per-frame detections."""
    calib = spec.calibration()
    noise = spec.noise
    n = spec.duration_frames
    frames = [FrameBundle(spec.sequence_id, k, [], [], spec.cycle_time) for k in range(n)]
    gt_rows = []
    for idx, agent in enumerate(spec.agents):
        traj = agent.trajectory(n)
        for k in range(agent.spawn_frame, n):
            if not agent.alive(k) or agent.occluded(k):
                continue
            box = Box3D(tuple(traj[k]), agent.dims, agent.yaw)
            if not _visible(box, calib):
                continue
            box2d = project_box3d(box, calib)
            gt_rows.append(LabelRow(k, idx, type_from_class(agent.class_id), _truncation(box, calib), 0,
                                    observation_angle(box), box2d, box))

            rng = _rng(spec.rng_seed, _LIDAR, idx, k)
            if rng.random() < noise.lidar_recall:
                det_box = _perturb(box, noise, rng)
                frames[k].lidar_detections.append(
                    Detection3D(agent.class_id, det_box, float(rng.uniform(0.6, 1.0))))
            rng = _rng(spec.rng_seed, _CAMERA, idx, k)
            if rng.random() < noise.camera_recall:
                cam_box = project_box3d(_perturb(box, noise, rng), calib)
                if cam_box is not None:
                    frames[k].camera_detections.append(
                        Detection2D(agent.class_id, cam_box, float(rng.uniform(0.6, 1.0))))

    for k in range(n):
        rng = _rng(spec.rng_seed, _LIDAR_FP, 0, k)
        for _ in range(rng.poisson(noise.lidar_fp_rate)):
            frames[k].lidar_detections.append(Detection3D("car", _random_box(rng), float(rng.uniform(0.2, 0.6))))
        rng = _rng(spec.rng_seed, _CAMERA_FP, 0, k)
        for _ in range(rng.poisson(noise.camera_fp_rate)):
            b = project_box3d(_random_box(rng), calib)
            score = float(rng.uniform(0.3, 0.8))
            if b is not None:
                frames[k].camera_detections.append(Detection2D("car", b, score))

    gt_rows.sort(key=lambda r: (r.frame, r.track_id))
    return Scenario(spec, calib, gt_rows, frames)


# ---------------------------------------------------------------- canned scenarios

def late_detection_scenario(appear_frame: int = 36, distance: float = 15.0, duration: int = 80,
                            seed: int = 0, lateral_speed: float = 0.3) -> ScenarioSpec:
    """A car crossing from the left that leaves an occlusion at ``appear_frame``.

    With a 1-of-10 schedule the first periodic frame after the default
    appearance is 40, four frames late.
    """
    x_appear = -6.0
    x0 = x_appear - lateral_speed * appear_frame
    car = AgentSpec("car", 0, (x0, CAMERA_HEIGHT, distance), 0.0, (lateral_speed, 0.0, 0.0),
                    occlusions=[(0, appear_frame)])
    noise = NoiseSpec(position_std=0.05, dims_std=0.02, yaw_std=0.01)
    return ScenarioSpec(duration, [car], noise, seed, sequence_id="late")


def urban_scenario(duration: int = 400, seed: int = 7, appearance_interval: int = 25,
                   noise: Optional[NoiseSpec] = None) -> ScenarioSpec:
    """Urban street with parked cars, oncoming traffic and recurring near-field crossings.

    Crossing vehicles and pedestrians emerge from occlusions close to the ego,
    roughly once per ``appearance_interval`` frames.
    """
    rng = np.random.default_rng([seed, 99])
    agents = []
    parked_z = []
    # parked cars along both curbs
    for z in np.arange(12.0, 60.0, 9.0):
        side = rng.choice([-1.0, 1.0])
        parked_z.append(z + rng.uniform(-1, 1))
        agents.append(AgentSpec("car", 0, (side * rng.uniform(4.5, 6.0), CAMERA_HEIGHT, parked_z[-1]),
                                math.pi / 2 + rng.normal(0, 0.05)))
    # crossings pass through both curbs, so keep them in the gaps between parked cars
    half_length = CLASS_DIMS["car"][2] / 2
    clearance = [(z - half_length, z + half_length) for z in parked_z]
    # longitudinal traffic entering far away
    k = 0
    while k < duration - 20:
        lane = rng.choice([-2.5, 2.5])
        speed = rng.uniform(0.3, 0.8)
        agents.append(AgentSpec("car", k, (lane, CAMERA_HEIGHT, 60.0), -math.pi / 2, (0.0, 0.0, -speed),
                                despawn_frame=min(duration, k + int(50.0 / speed))))
        k += int(rng.integers(30, 60))
    # near-field crossings out of occlusion
    k = int(rng.integers(5, appearance_interval))
    while k < duration - 15:
        cls = "car" if rng.random() < 0.75 else "pedestrian"
        direction = rng.choice([-1.0, 1.0])
        half_width = CLASS_DIMS[cls][1] / 2 + 0.5
        z = rng.uniform(9.0, 24.0)
        while any(lo - half_width < z < hi + half_width for lo, hi in clearance):
            z = rng.uniform(9.0, 24.0)
        speed = rng.uniform(0.4, 1.0) if cls == "car" else rng.uniform(0.12, 0.2)
        hidden = 10
        x_emerge = -direction * rng.uniform(3.5, 5.5)
        x0 = x_emerge - direction * speed * hidden
        yaw = 0.0 if direction > 0 else math.pi
        life = hidden + int(2 * abs(x_emerge) / speed) + 5
        agents.append(AgentSpec(cls, k, (x0, CAMERA_HEIGHT, z), yaw, (direction * speed, 0.0, 0.0),
                                occlusions=[(k, k + hidden)], despawn_frame=min(duration, k + life)))
        k += int(rng.integers(appearance_interval // 2, appearance_interval * 3 // 2 + 1))
    if noise is None:
        noise = NoiseSpec(position_std=0.15, dims_std=0.05, yaw_std=0.05, lidar_recall=0.92,
                          camera_recall=0.92, lidar_fp_rate=0.2, camera_fp_rate=0.05)
    return ScenarioSpec(duration, agents, noise, seed, sequence_id=f"urban{seed:04d}")
