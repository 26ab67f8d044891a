"""Frame-dropping decisions: a periodic n-of-m baseline plus a camera event trigger.

The trigger can only add processed frames. It fires when a camera detection
that is estimated to be close (pinhole distance from a class height) has no
predicted track whose projected 2D box overlaps it by at least ``iou_min``.
Triggered frames do not shift the periodic phase, so n/m stays a lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .errors import ConfigError
from .geometry import Calibration, iou_2d, project_box3d
from .io_kitti import Detection2D

PERIODIC, EVENT_TRIGGER, NONE = "periodic", "event-trigger", "none"

DEFAULT_CLASS_HEIGHTS = {"car": 1.5, "pedestrian": 1.75, "cyclist": 1.75, "other": 1.5}


@dataclass
class SchedulerConfig:
    n: int = 1
    m: int = 1
    d_max: float = 25.0
    iou_min: float = 0.25
    class_heights: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_HEIGHTS))
    event_trigger_enabled: bool = True
    camera_score_floor: float = 0.5
    # frames of camera processing delay applied by the pipeline; 0 means same-cycle
    camera_latency_frames: int = 0

    def __post_init__(self):
        if not (1 <= self.n <= self.m):
            raise ConfigError(f"need 1 <= n <= m, got n={self.n}, m={self.m}", "n")
        if self.d_max <= 0:
            raise ConfigError("d_max must be positive", "d_max")
        if not 0.0 <= self.iou_min <= 1.0:
            raise ConfigError("iou_min must lie in [0, 1]", "iou_min")
        if any(h <= 0 for h in self.class_heights.values()):
            raise ConfigError("class heights must be positive", "class_heights")
        if self.camera_latency_frames < 0:
            raise ConfigError("camera latency must be non-negative", "camera_latency_frames")

    @property
    def baseline_target(self) -> float:
        return self.n / self.m


@dataclass(frozen=True)
class ScheduleDecision:
    process: bool
    reason: str = NONE
    triggering_detections: tuple = ()

    def __post_init__(self):
        if (self.reason == NONE) == self.process:
            raise ValueError("reason must be 'none' exactly when the frame is dropped")


DROP = ScheduleDecision(False, NONE)
PROCESS = ScheduleDecision(True, PERIODIC)


@dataclass
class ScheduleStats:
    frames_total: int = 0
    frames_processed: int = 0
    frames_event_triggered: int = 0

    @property
    def effective_target(self) -> float:
        return self.frames_processed / self.frames_total if self.frames_total else 0.0

    def record(self, decision: ScheduleDecision):
        self.frames_total += 1
        if decision.process:
            self.frames_processed += 1
        if decision.reason == EVENT_TRIGGER:
            self.frames_event_triggered += 1

    def __add__(self, other: "ScheduleStats") -> "ScheduleStats":
        return ScheduleStats(self.frames_total + other.frames_total,
                             self.frames_processed + other.frames_processed,
                             self.frames_event_triggered + other.frames_event_triggered)


def periodic_decision(frame_index: int, n: int, m: int) -> bool:
    return frame_index % m < n


def estimate_distance(det: Detection2D, calib: Calibration, class_heights: dict) -> float:
    """Pinhole range estimate: assumed object height times focal length over pixel height."""
    height = class_heights.get(det.class_id, class_heights.get("other", DEFAULT_CLASS_HEIGHTS["other"]))
    return height * calib.focal_length / det.box.height


def filter_near(dets: Sequence[Detection2D], calib: Calibration, config: SchedulerConfig) -> list[Detection2D]:
    """Detections estimated within ``d_max`` (inclusive), in input order."""
    return [d for d in dets if estimate_distance(d, calib, config.class_heights) <= config.d_max]


def event_trigger(predicted_tracks, near_dets: Sequence[Detection2D], calib: Calibration,
                  iou_min: float) -> tuple[bool, list[int]]:
    """Indices of near detections whose best overlap with any projected track is below ``iou_min``.

    ``predicted_tracks`` are objects with a ``box`` (Box3D) already advanced to
    the current frame. Tracks that do not project into the image are ignored.
    """
    boxes = [b for b in (project_box3d(t.box, calib) for t in predicted_tracks) if b is not None]
    offending = []
    for i, det in enumerate(near_dets):
        best = max((iou_2d(det.box, b) for b in boxes), default=0.0)
        if best < iou_min:
            offending.append(i)
    return bool(offending), offending


class Scheduler:
    """Per-sequence decision maker; accumulates ScheduleStats."""

    def __init__(self, config: SchedulerConfig, calib: Calibration):
        self.config = config
        self.calib = calib
        self.stats = ScheduleStats()

    def decide(self, frame_index: int, predicted_tracks, camera_dets: Sequence[Detection2D]) -> ScheduleDecision:
        return decide(frame_index, predicted_tracks, camera_dets, self.calib, self.config, self.stats)


def decide(frame_index: int, predicted_tracks, camera_dets: Sequence[Detection2D], calib: Calibration,
           config: SchedulerConfig, stats: ScheduleStats) -> ScheduleDecision:
    cfg = config
    if periodic_decision(frame_index, cfg.n, cfg.m):
        decision = PROCESS
    elif cfg.event_trigger_enabled:
        positions = [k for k, d in enumerate(camera_dets) if d.score >= cfg.camera_score_floor
                     and estimate_distance(d, calib, cfg.class_heights) <= cfg.d_max]
        near = [camera_dets[k] for k in positions]
        fired, idx = event_trigger(predicted_tracks, near, calib, cfg.iou_min) if near else (False, [])
        if fired:
            decision = ScheduleDecision(True, EVENT_TRIGGER, tuple(positions[i] for i in idx))
        else:
            decision = DROP
    else:
        decision = DROP
    stats.record(decision)
    return decision
