"""KITTI tracking text formats: calibration, labels, detections and tracker output.

A dataset directory holds one file per sequence in each of::

    calib/<seq>.txt        camera calibration
    label_02/<seq>.txt     ground-truth labels (optional)
    det_lidar/<seq>.txt    lidar 3D detections, KITTI rows with trailing score
    det_camera/<seq>.txt   camera 2D detections, same grammar, 3D fields invalid

plus an ``evaluate_tracking.seqmap`` listing ``<seq> empty <first> <n_frames>``.

Floats are written with ``repr`` (shortest round-trip form), so write followed
by parse reproduces every shared field bit for bit.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ParseError
from .geometry import Box2D, Box3D, Calibration, wrap_angle

CALIB_DIR = "calib"
LABEL_DIR = "label_02"
LIDAR_DIR = "det_lidar"
CAMERA_DIR = "det_camera"
SEQMAP = "evaluate_tracking.seqmap"

DEFAULT_CYCLE_TIME = 0.1

TRACKED_CLASSES = ("car", "pedestrian", "cyclist")
_TYPE_TO_CLASS = {"car": "car", "pedestrian": "pedestrian", "cyclist": "cyclist", "dontcare": "dontcare"}
_CLASS_TO_TYPE = {"car": "Car", "pedestrian": "Pedestrian", "cyclist": "Cyclist", "other": "Misc", "dontcare": "DontCare"}

# invalid-field sentinels used by KITTI for DontCare rows and 2D-only detections
_NO_BBOX = (-1.0, -1.0, -1.0, -1.0)
_NO_DIMS = (-1.0, -1.0, -1.0)
_NO_LOCATION = (-1000.0, -1000.0, -1000.0)
_NO_YAW = -10.0

_N_FIELDS = 17


def class_from_type(type_name: str) -> str:
    """Map a KITTI object type to a tracked class; unknown types become ``other``."""
    return _TYPE_TO_CLASS.get(type_name.lower(), "other")


def type_from_class(class_id: str) -> str:
    return _CLASS_TO_TYPE[class_id]


@dataclass(frozen=True)
class Detection3D:
    class_id: str
    box: Box3D
    score: float
    box2d_hint: Optional[Box2D] = None

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError("detection score must be finite")


@dataclass(frozen=True)
class Detection2D:
    class_id: str
    box: Box2D
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"camera detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class LabelRow:
    """One row of a KITTI tracking label, detection or result file."""

    frame: int
    track_id: int
    type_name: str
    truncated: float = 0.0
    occluded: int = 0
    alpha: float = _NO_YAW
    box2d: Optional[Box2D] = None
    box3d: Optional[Box3D] = None
    score: Optional[float] = None

    @property
    def class_id(self) -> str:
        return class_from_type(self.type_name)

    @property
    def is_dontcare(self) -> bool:
        return self.type_name.lower() == "dontcare"


@dataclass
class GroundTruthTrack:
    track_id: int
    entries: list[LabelRow] = field(default_factory=list)

    @property
    def class_id(self) -> str:
        return self.entries[0].class_id if self.entries else "other"

    @property
    def frames(self) -> list[int]:
        return [e.frame for e in self.entries]


@dataclass(frozen=True)
class TrackOutput:
    """A confirmed track as reported for one frame."""

    track_id: int
    class_id: str
    box3d: Box3D
    box2d: Optional[Box2D]
    score: float = 1.0


@dataclass
class FrameBundle:
    sequence_id: str
    frame_index: int
    lidar_detections: list[Detection3D] = field(default_factory=list)
    camera_detections: list[Detection2D] = field(default_factory=list)
    cycle_time: float = DEFAULT_CYCLE_TIME

    @property
    def timestamp(self) -> float:
        return self.frame_index * self.cycle_time


@dataclass
class SequenceData:
    sequence_id: str
    calib: Calibration
    frames: list[FrameBundle]
    ground_truth: list[GroundTruthTrack]

    def __len__(self):
        return len(self.frames)


# ---------------------------------------------------------------- calibration

_CALIB_KEYS = {
    "P2": (("P2",), 12),
    "R0_rect": (("R0_rect", "R_rect"), 9),
    "Tr_velo_to_cam": (("Tr_velo_to_cam", "Tr_velo_cam"), 12),
}
_ARITY = {"P0": 12, "P1": 12, "P2": 12, "P3": 12, "R0_rect": 9, "R_rect": 9,
          "Tr_velo_to_cam": 12, "Tr_velo_cam": 12, "Tr_imu_to_velo": 12, "Tr_imu_velo": 12}


def parse_calibration(stream: IO[str], image_size=(1242, 375)) -> Calibration:
    """Read a KITTI calib file (object or tracking flavour) into a Calibration.

    The left color camera (P2) is used as the projection.
    """
    values: dict[str, list[float]] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        key = key.rstrip(":")
        if key not in _ARITY:
            continue
        tokens = rest.split()
        try:
            nums = [float(t) for t in tokens]
        except ValueError:
            raise ParseError("non-numeric calibration value", lineno, key) from None
        if len(nums) != _ARITY[key]:
            raise ParseError(f"expected {_ARITY[key]} values, got {len(nums)}", lineno, key)
        values[key] = nums

    found = {}
    for canonical, (aliases, _) in _CALIB_KEYS.items():
        hit = next((values[a] for a in aliases if a in values), None)
        if hit is None:
            raise ParseError(f"missing calibration entry {canonical}", key=canonical)
        found[canonical] = hit
    return Calibration(
        projection=np.array(found["P2"]).reshape(3, 4),
        rectification=np.array(found["R0_rect"]).reshape(3, 3),
        lidar_to_cam=np.array(found["Tr_velo_to_cam"]).reshape(3, 4),
        image_size=tuple(image_size),
    )


def write_calibration(calib: Calibration, sink: IO[str]) -> None:
    p = " ".join(repr(float(v)) for v in calib.projection.ravel())
    for cam in ("P0", "P1", "P2", "P3"):
        sink.write(f"{cam}: {p}\n")
    sink.write("R0_rect: " + " ".join(repr(float(v)) for v in calib.rectification.ravel()) + "\n")
    sink.write("Tr_velo_to_cam: " + " ".join(repr(float(v)) for v in calib.lidar_to_cam.ravel()) + "\n")


# ---------------------------------------------------------------- label rows

def _parse_row(tokens: list[str], lineno: int, require_score: bool, require_id: bool) -> LabelRow:
    if len(tokens) not in (_N_FIELDS, _N_FIELDS + 1):
        raise ParseError(f"expected {_N_FIELDS} or {_N_FIELDS + 1} fields, got {len(tokens)}", lineno)
    if require_score and len(tokens) == _N_FIELDS:
        raise ParseError("detection row has no score", lineno)
    try:
        frame = int(tokens[0])
        track_id = int(tokens[1])
        type_name = tokens[2]
        truncated = float(tokens[3])
        occluded = int(tokens[4])
        alpha = float(tokens[5])
        bbox = tuple(float(t) for t in tokens[6:10])
        dims = tuple(float(t) for t in tokens[10:13])
        loc = tuple(float(t) for t in tokens[13:16])
        yaw = float(tokens[16])
        score = float(tokens[17]) if len(tokens) > _N_FIELDS else None
    except ValueError as exc:
        raise ParseError(f"malformed field: {exc}", lineno) from None
    if frame < 0:
        raise ParseError("negative frame index", lineno)
    if require_id and track_id < 0 and type_name.lower() != "dontcare":
        raise ParseError("label row without track id", lineno)
    try:
        box2d = None if bbox == _NO_BBOX else Box2D(*bbox)
        box3d = None if (loc == _NO_LOCATION or all(d <= 0 for d in dims)) else Box3D(loc, dims, yaw)
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None
    return LabelRow(frame, track_id, type_name, truncated, occluded, alpha, box2d, box3d, score)


def parse_rows(stream: IO[str], require_score=False, require_id=False) -> list[LabelRow]:
    """Parse all rows; blank lines are skipped and the result is stably sorted by frame."""
    rows = []
    for lineno, raw in enumerate(stream, start=1):
        tokens = raw.split()
        if tokens:
            rows.append(_parse_row(tokens, lineno, require_score, require_id))
    rows.sort(key=lambda r: r.frame)
    return rows


def parse_label_file(stream: IO[str], is_detection: bool = False):
    """Parse a label file into ground-truth tracks, or a detection file into per-frame rows.

    Label mode returns a list of GroundTruthTrack sorted by id; DontCare rows are
    kept (flagged through ``LabelRow.is_dontcare``) under their own id. Detection
    mode ignores ids, requires scores and returns ``{frame: [LabelRow, ...]}``.
    """
    rows = parse_rows(stream, require_score=is_detection, require_id=not is_detection)
    if is_detection:
        per_frame: dict[int, list[LabelRow]] = defaultdict(list)
        for row in rows:
            per_frame[row.frame].append(row)
        return dict(per_frame)
    tracks: dict[int, GroundTruthTrack] = {}
    seen = set()
    for row in rows:
        if not row.is_dontcare:
            if (row.track_id, row.frame) in seen:
                raise ParseError(f"duplicate entry for track {row.track_id} at frame {row.frame}")
            seen.add((row.track_id, row.frame))
        tracks.setdefault(row.track_id, GroundTruthTrack(row.track_id)).entries.append(row)
    return [tracks[k] for k in sorted(tracks)]


def format_row(row: LabelRow) -> str:
    bbox = row.box2d.as_array().tolist() if row.box2d is not None else _NO_BBOX
    if row.box3d is not None:
        dims, loc, yaw = row.box3d.dims, row.box3d.location, row.box3d.yaw
    else:
        dims, loc, yaw = _NO_DIMS, _NO_LOCATION, _NO_YAW
    fields = [str(row.frame), str(row.track_id), row.type_name, repr(float(row.truncated)),
              str(row.occluded), repr(float(row.alpha))]
    fields += [repr(float(v)) for v in (*bbox, *dims, *loc, yaw)]
    if row.score is not None:
        fields.append(repr(float(row.score)))
    return " ".join(fields)


def write_label_rows(rows: Iterable[LabelRow], sink: IO[str]) -> None:
    for row in rows:
        sink.write(format_row(row) + "\n")


def observation_angle(box: Box3D) -> float:
    x, _, z = box.location
    return wrap_angle(box.yaw - math.atan2(x, z))


def write_tracking_output(tracks_per_frame: Mapping[int, Sequence[TrackOutput]], sink: IO[str]) -> None:
    """Write confirmed tracks in KITTI tracking submission format, frames ascending."""
    for frame in sorted(tracks_per_frame):
        for t in tracks_per_frame[frame]:
            row = LabelRow(frame, t.track_id, type_from_class(t.class_id), 0.0, 0,
                           observation_angle(t.box3d), t.box2d, t.box3d, t.score)
            sink.write(format_row(row) + "\n")


# ---------------------------------------------------------------- conversions

def detection3d_from_row(row: LabelRow) -> Detection3D:
    if row.box3d is None:
        raise ValueError(f"row at frame {row.frame} has no 3D box")
    return Detection3D(row.class_id, row.box3d, float(row.score), row.box2d)


def detection2d_from_row(row: LabelRow) -> Detection2D:
    if row.box2d is None:
        raise ValueError(f"row at frame {row.frame} has no 2D box")
    return Detection2D(row.class_id, row.box2d, float(row.score))


def row_from_detection3d(frame: int, det: Detection3D) -> LabelRow:
    return LabelRow(frame, -1, type_from_class(det.class_id), 0.0, 0, observation_angle(det.box),
                    det.box2d_hint, det.box, det.score)


def row_from_detection2d(frame: int, det: Detection2D) -> LabelRow:
    return LabelRow(frame, -1, type_from_class(det.class_id), 0.0, 0, _NO_YAW, det.box, None, det.score)


def tracks_from_outputs(outputs: Mapping[int, Sequence[TrackOutput]]) -> list[GroundTruthTrack]:
    """Regroup per-frame tracker output by id, in the same shape as parsed labels."""
    tracks: dict[int, GroundTruthTrack] = {}
    for frame in sorted(outputs):
        for t in outputs[frame]:
            row = LabelRow(frame, t.track_id, type_from_class(t.class_id), 0.0, 0,
                           observation_angle(t.box3d), t.box2d, t.box3d, t.score)
            tracks.setdefault(t.track_id, GroundTruthTrack(t.track_id)).entries.append(row)
    return [tracks[k] for k in sorted(tracks)]


# ---------------------------------------------------------------- directories

def read_seqmap(root) -> dict[str, int]:
    """Sequence id -> frame count, from the seqmap file when present."""
    path = Path(root) / SEQMAP
    if not path.exists():
        return {}
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 4:
                raise ParseError("seqmap rows need 4 fields", lineno)
            out[tokens[0]] = int(tokens[3])
    return out


def list_sequences(root) -> list[str]:
    return sorted(p.stem for p in (Path(root) / CALIB_DIR).glob("*.txt"))


def load_sequence(root, sequence_id: str, cycle_time: float = DEFAULT_CYCLE_TIME,
                  image_size=(1242, 375)) -> SequenceData:
    """Assemble one FrameBundle per frame index in [0, max_frame] from a dataset directory."""
    root = Path(root)
    with open(root / CALIB_DIR / f"{sequence_id}.txt") as fh:
        calib = parse_calibration(fh, image_size)

    def read_optional(sub, **kw):
        path = root / sub / f"{sequence_id}.txt"
        if not path.exists():
            return None
        with open(path) as fh:
            return parse_label_file(fh, **kw)

    gt = read_optional(LABEL_DIR) or []
    lidar = read_optional(LIDAR_DIR, is_detection=True) or {}
    camera = read_optional(CAMERA_DIR, is_detection=True) or {}
    last = max([-1] + [e.frame for t in gt for e in t.entries] + list(lidar) + list(camera))
    last = max(last, read_seqmap(root).get(sequence_id, 0) - 1)
    frames = [
        FrameBundle(
            sequence_id, k,
            [detection3d_from_row(r) for r in lidar.get(k, ()) if r.box3d is not None],
            [detection2d_from_row(r) for r in camera.get(k, ()) if r.box2d is not None],
            cycle_time,
        )
        for k in range(last + 1)
    ]
    return SequenceData(sequence_id, calib, frames, gt)


def write_sequence(root, sequence_id: str, calib: Calibration, ground_truth: Sequence[LabelRow],
                   frames: Sequence[FrameBundle]) -> None:
    """Write one sequence into a dataset directory and register it in the seqmap."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    seqmap = read_seqmap(root)
    seqmap[sequence_id] = len(frames)
    with open(root / SEQMAP, "w") as fh:
        for seq in sorted(seqmap):
            fh.write(f"{seq} empty 000000 {seqmap[seq]:06d}\n")
    for sub in (CALIB_DIR, LABEL_DIR, LIDAR_DIR, CAMERA_DIR):
        (root / sub).mkdir(parents=True, exist_ok=True)
    with open(root / CALIB_DIR / f"{sequence_id}.txt", "w") as fh:
        write_calibration(calib, fh)
    with open(root / LABEL_DIR / f"{sequence_id}.txt", "w") as fh:
        write_label_rows(ground_truth, fh)
    with open(root / LIDAR_DIR / f"{sequence_id}.txt", "w") as fh:
        write_label_rows((row_from_detection3d(f.frame_index, d) for f in frames for d in f.lidar_detections), fh)
    with open(root / CAMERA_DIR / f"{sequence_id}.txt", "w") as fh:
        write_label_rows((row_from_detection2d(f.frame_index, d) for f in frames for d in f.camera_detections), fh)
