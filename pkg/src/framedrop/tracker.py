"""Drop-aware multi-object tracking.

Two variants share one constant-velocity Kalman filter and one track lifecycle:

* ``lidar-only``: only lidar 3D detections update tracks; camera detections
  are used elsewhere (the scheduler) and never reach the tracker.
* ``fusion``: additionally associates projected tracks with camera 2D
  detections on every frame, dropped or not. A camera match keeps a track's
  coast clock fresh and counts toward confirmation, but does not correct the
  3D state unless ``camera_position_correction`` is enabled.

Misses are counted only on frames where the lidar detector actually ran; a
separate wall-clock coast limit retires tracks that have not been refreshed
for too many cycles. Velocities are in meters per cycle.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError
from .geometry import ASSOCIATION_METRICS, Box3D, Calibration, iou_matrix, overlap_3d, project_box3d, wrap_angle
from .io_kitti import Detection2D, Detection3D, FrameBundle, TrackOutput

log = logging.getLogger(__name__)

STATE_DIM = 10
MEAS_DIM = 7
VARIANTS = ("lidar-only", "fusion")

TENTATIVE, CONFIRMED, DEAD = "tentative", "confirmed", "dead"

# stands in for -inf in assignment matrices; must dominate any real similarity
_FORBIDDEN = -1e9

_F = np.eye(STATE_DIM)
_F[0:3, 7:10] = np.eye(3)
_H = np.hstack([np.eye(MEAS_DIM), np.zeros((MEAS_DIM, 3))])


class NumericalFailure(ArithmeticError):
    """Innovation covariance is not positive definite."""


@dataclass
class TrackerConfig:
    variant: str = "lidar-only"
    metric: str = "bev-iou"
    # bev-iou: minimum overlap; centroid-distance: maximum distance in meters
    gate: float = 0.1
    confirm_hits: int = 2
    max_misses: int = 2
    max_coast_frames: int = 25
    lidar_score_floor: float = 0.3
    # standard deviations; process noise is per cycle
    process_noise_pos: float = 0.1
    process_noise_vel: float = 0.1
    process_noise_shape: float = 0.01
    measurement_noise_pos: float = 0.2
    measurement_noise_yaw: float = 0.1
    measurement_noise_dims: float = 0.2
    birth_velocity_std: float = 3.0
    greedy: bool = False
    # fusion only
    camera_score_floor: float = 0.5
    camera_iou_gate: float = 0.3
    camera_hit_weight: int = 1
    camera_position_correction: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown tracker variant {self.variant!r}", "variant")
        if self.metric not in ASSOCIATION_METRICS:
            raise ConfigError(f"unknown association metric {self.metric!r}", "metric")
        if self.gate <= 0:
            raise ConfigError("gate must be positive", "gate")
        if self.confirm_hits < 1:
            raise ConfigError("confirm_hits must be >= 1", "confirm_hits")
        if self.max_misses < 0 or self.max_coast_frames < 0:
            raise ConfigError("lifecycle limits must be non-negative", "max_misses")

    @property
    def process_cov(self) -> np.ndarray:
        q = [self.process_noise_pos] * 3 + [self.process_noise_shape] * 4 + [self.process_noise_vel] * 3
        return np.diag(np.square(q))

    @property
    def measurement_cov(self) -> np.ndarray:
        r = [self.measurement_noise_pos] * 3 + [self.measurement_noise_yaw] + [self.measurement_noise_dims] * 3
        return np.diag(np.square(r))


@dataclass
class TrackState:
    """Mean (x, y, z, yaw, l, w, h, vx, vy, vz) and its covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def copy(self) -> "TrackState":
        return TrackState(self.mean.copy(), self.covariance.copy())


@dataclass
class Track:
    id: int
    state: TrackState
    class_id: str
    status: str = TENTATIVE
    consecutive_hits: int = 1
    missed_processed_frames: int = 0
    age_frames: int = 0
    last_update_frame: int = 0
    score: float = 1.0

    @property
    def box(self) -> Box3D:
        m = self.state.mean
        dims = np.maximum(m[[6, 5, 4]], 1e-3)
        return Box3D((m[0], m[1], m[2]), tuple(dims), m[3])

    @property
    def velocity(self) -> np.ndarray:
        return self.state.mean[7:10]


def measurement_from_box(box: Box3D) -> np.ndarray:
    h, w, l = box.dims
    return np.array([*box.location, box.yaw, l, w, h])


def initiate(det: Detection3D, config: TrackerConfig) -> TrackState:
    mean = np.zeros(STATE_DIM)
    mean[:MEAS_DIM] = measurement_from_box(det.box)
    cov = np.zeros((STATE_DIM, STATE_DIM))
    cov[:MEAS_DIM, :MEAS_DIM] = config.measurement_cov
    cov[7:, 7:] = np.eye(3) * config.birth_velocity_std ** 2
    return TrackState(mean, cov)


def predict_state(state: TrackState, q: np.ndarray) -> TrackState:
    mean = _F @ state.mean
    mean[3] = wrap_angle(mean[3])
    cov = _F @ state.covariance @ _F.T + q
    return TrackState(mean, 0.5 * (cov + cov.T))


def predict_all(tracks: Sequence[Track], dt_cycles: int, config: Optional[TrackerConfig] = None) -> list[Track]:
    """Advance copies of ``tracks`` by ``dt_cycles`` constant-velocity steps."""
    if dt_cycles < 1:
        raise ValueError("dt_cycles must be >= 1")
    q = (config or TrackerConfig()).process_cov
    out = []
    for t in tracks:
        state = t.state
        for _ in range(dt_cycles):
            state = predict_state(state, q)
        nt = copy.copy(t)
        nt.state = state
        out.append(nt)
    return out


def kalman_update(state: TrackState, z: np.ndarray, r: np.ndarray) -> TrackState:
    """Linear Kalman correction with a wrapped yaw innovation (Joseph form)."""
    P = state.covariance
    S = _H @ P @ _H.T + r
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NumericalFailure("innovation covariance not positive definite") from None
    innovation = z - _H @ state.mean
    innovation[3] = wrap_angle(innovation[3])
    K = np.linalg.solve(S, _H @ P).T
    mean = state.mean + K @ innovation
    mean[3] = wrap_angle(mean[3])
    A = np.eye(STATE_DIM) - K @ _H
    cov = A @ P @ A.T + K @ r @ K.T
    return TrackState(mean, 0.5 * (cov + cov.T))


def update(track: Track, detection: Detection3D, config: TrackerConfig, frame_index: Optional[int] = None) -> Track:
    """Correct a matched track with a lidar detection and refresh its lifecycle counters."""
    out = copy.copy(track)
    out.state = kalman_update(track.state, measurement_from_box(detection.box), config.measurement_cov)
    out.consecutive_hits = track.consecutive_hits + 1
    out.missed_processed_frames = 0
    out.score = detection.score
    if frame_index is not None:
        out.last_update_frame = frame_index
    return out


# ---------------------------------------------------------------- association

def assign(similarity: np.ndarray, valid: np.ndarray, greedy: bool = False) -> list[tuple[int, int]]:
    """Maximum-similarity assignment restricted afterwards to ``valid`` pairs.

    The optimal (rectangular Hungarian) assignment is computed over all pairs,
    with forbidden pairs at a large negative similarity; pairs failing ``valid``
    are then dropped. ``greedy`` picks the best remaining valid pair repeatedly.
    """
    n, m = similarity.shape
    if n == 0 or m == 0:
        return []
    if greedy:
        pairs = []
        free_r, free_c = set(range(n)), set(range(m))
        order = np.argsort(-similarity, axis=None, kind="stable")
        for flat in order:
            i, j = divmod(int(flat), m)
            if i in free_r and j in free_c and valid[i, j]:
                pairs.append((i, j))
                free_r.discard(i)
                free_c.discard(j)
        return sorted(pairs)
    rows, cols = linear_sum_assignment(similarity, maximize=True)
    return [(int(i), int(j)) for i, j in zip(rows, cols) if valid[i, j]]


def _classes_compatible(a: str, b: str) -> bool:
    return a == b or a == "other" or b == "other"


def similarity_3d(tracks: Sequence[Track], dets: Sequence[Detection3D], config: TrackerConfig):
    """Similarity matrix (larger is better) and gate mask between tracks and lidar detections."""
    sim = np.full((len(tracks), len(dets)), _FORBIDDEN)
    valid = np.zeros(sim.shape, dtype=bool)
    for i, t in enumerate(tracks):
        tbox = t.box
        for j, d in enumerate(dets):
            if not _classes_compatible(t.class_id, d.class_id):
                continue
            value = overlap_3d(tbox, d.box, config.metric)
            if config.metric == "centroid-distance":
                sim[i, j] = -value
                valid[i, j] = value <= config.gate
            else:
                sim[i, j] = value
                valid[i, j] = value >= config.gate
    return sim, valid


def associate(tracks: Sequence[Track], detections: Sequence[Detection3D], config: TrackerConfig):
    """Cascade association: confirmed tracks first, tentative tracks on the remainder.

    Returns ``(matches, unmatched_tracks, unmatched_detections)`` as index lists
    into the inputs; ``matches`` holds ``(track_index, detection_index)`` pairs.
    """
    matches = []
    free_dets = list(range(len(detections)))
    for stage in (CONFIRMED, TENTATIVE):
        t_idx = [i for i, t in enumerate(tracks) if t.status == stage]
        if not t_idx or not free_dets:
            continue
        sim, valid = similarity_3d([tracks[i] for i in t_idx], [detections[j] for j in free_dets], config)
        pairs = assign(sim, valid, config.greedy)
        matches += [(t_idx[a], free_dets[b]) for a, b in pairs]
        taken = {free_dets[b] for _, b in pairs}
        free_dets = [j for j in free_dets if j not in taken]
    matched_t = {i for i, _ in matches}
    unmatched_tracks = [i for i in range(len(tracks)) if i not in matched_t]
    return sorted(matches), unmatched_tracks, free_dets


# ---------------------------------------------------------------- tracker

class Tracker:
    """Stateful tracker for one sequence.

    ``step`` dispatches on ``config.variant``. Instances are single-threaded;
    run distinct sequences on distinct instances.
    """

    def __init__(self, config: Optional[TrackerConfig] = None, calib: Optional[Calibration] = None):
        self.config = config or TrackerConfig()
        if self.config.variant == "fusion" and calib is None:
            raise ConfigError("fusion tracking needs a calibration", "calib")
        self.calib = calib
        self.tracks: list[Track] = []
        self._next_id = 1

    def predicted(self, dt_cycles: int = 1) -> list[Track]:
        """Live tracks advanced by ``dt_cycles`` without changing tracker state."""
        return predict_all(self.tracks, dt_cycles, self.config)

    def step(self, frame: FrameBundle, decision) -> list[TrackOutput]:
        if self.config.variant == "fusion":
            return self.step_fusion(frame, decision)
        return self.step_lidar_only(frame, decision)

    def step_lidar_only(self, frame: FrameBundle, decision) -> list[TrackOutput]:
        self._predict()
        if decision.process:
            self._lidar_stage(frame)
        self._retire(frame.frame_index)
        return self.outputs()

    def step_fusion(self, frame: FrameBundle, decision) -> list[TrackOutput]:
        self._predict()
        lidar_matched = self._lidar_stage(frame) if decision.process else set()
        self._camera_stage(frame, lidar_matched)
        self._retire(frame.frame_index)
        return self.outputs()

    def outputs(self) -> list[TrackOutput]:
        out = []
        for t in self.tracks:
            if t.status != CONFIRMED:
                continue
            box = t.box
            box2d = project_box3d(box, self.calib) if self.calib is not None else None
            out.append(TrackOutput(t.id, t.class_id, box, box2d, t.score))
        return out

    # -- internals

    def _predict(self):
        self.tracks = predict_all(self.tracks, 1, self.config)
        for t in self.tracks:
            t.age_frames += 1

    def _promote(self, track: Track):
        if track.status == TENTATIVE and track.consecutive_hits >= self.config.confirm_hits:
            track.status = CONFIRMED

    def _lidar_stage(self, frame: FrameBundle) -> set[int]:
        cfg = self.config
        k = frame.frame_index
        dets = [d for d in frame.lidar_detections if d.score >= cfg.lidar_score_floor]
        matches, unmatched_tracks, unmatched_dets = associate(self.tracks, dets, cfg)
        matched_ids = set()
        for ti, di in matches:
            try:
                self.tracks[ti] = update(self.tracks[ti], dets[di], cfg, k)
            except NumericalFailure:
                log.warning("track %d: numerical failure in update at frame %d", self.tracks[ti].id, k)
                unmatched_tracks.append(ti)
                continue
            matched_ids.add(self.tracks[ti].id)
            self._promote(self.tracks[ti])
        for ti in unmatched_tracks:
            t = self.tracks[ti]
            t.missed_processed_frames += 1
            t.consecutive_hits = 0
        for di in unmatched_dets:
            self._spawn(dets[di], k)
        return matched_ids

    def _camera_stage(self, frame: FrameBundle, lidar_matched: set[int]):
        cfg = self.config
        cams = [c for c in frame.camera_detections if c.score >= cfg.camera_score_floor]
        if not cams:
            return
        # lidar-matched tracks take part so that they consume their own camera
        # boxes, but only the others are refreshed by a camera match
        candidates, boxes = [], []
        for t in self.tracks:
            b = project_box3d(t.box, self.calib)
            if b is not None:
                candidates.append(t)
                boxes.append(b)
        if not candidates:
            return
        sim = iou_matrix(boxes, [c.box for c in cams])
        valid = sim >= cfg.camera_iou_gate
        for i, t in enumerate(candidates):
            for j, c in enumerate(cams):
                if not _classes_compatible(t.class_id, c.class_id):
                    sim[i, j] = _FORBIDDEN
                    valid[i, j] = False
        for i, j in assign(sim, valid, cfg.greedy):
            t = candidates[i]
            if t.id in lidar_matched:
                continue
            t.last_update_frame = frame.frame_index
            t.consecutive_hits += cfg.camera_hit_weight
            if cfg.camera_position_correction:
                self._camera_correct(t, boxes[i], cams[j].box)
            self._promote(t)

    def _camera_correct(self, track: Track, projected, detected):
        # shift laterally by the horizontal pixel offset back-projected at the track depth
        du = (detected.x_min + detected.x_max - projected.x_min - projected.x_max) / 2.0
        track.state.mean[0] += du * track.state.mean[2] / self.calib.focal_length

    def _spawn(self, det: Detection3D, frame_index: int):
        t = Track(self._next_id, initiate(det, self.config), det.class_id, last_update_frame=frame_index,
                  score=det.score)
        self._next_id += 1
        self._promote(t)
        self.tracks.append(t)

    def _retire(self, frame_index: int):
        cfg = self.config
        for t in self.tracks:
            if t.missed_processed_frames > cfg.max_misses or frame_index - t.last_update_frame > cfg.max_coast_frames:
                t.status = DEAD
        self.tracks = [t for t in self.tracks if t.status != DEAD]
