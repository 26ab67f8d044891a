import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framedrop.errors import ParseError
from framedrop.geometry import Box2D, Box3D, Calibration
from framedrop.io_kitti import (Detection2D, Detection3D, FrameBundle, LabelRow, TrackOutput, detection2d_from_row,
                                detection3d_from_row, list_sequences, load_sequence, parse_calibration,
                                parse_label_file, read_seqmap, row_from_detection2d, row_from_detection3d,
                                write_calibration, write_label_rows, write_sequence, write_tracking_output)

CALIB_TEXT = """\
P0: 7.215377e+02 0.000000e+00 6.095593e+02 0.000000e+00 0.000000e+00 7.215377e+02 1.728540e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P1: 7.215377e+02 0.000000e+00 6.095593e+02 -3.875744e+02 0.000000e+00 7.215377e+02 1.728540e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03
P3: 7.215377e+02 0.000000e+00 6.095593e+02 -3.395242e+02 0.000000e+00 7.215377e+02 1.728540e+02 2.199936e+00 0.000000e+00 0.000000e+00 1.000000e+00 2.729905e-03
R_rect 1 0 0 0 1 0 0 0 1
Tr_velo_cam 7.533745e-03 -9.999714e-01 -6.166020e-04 -4.069766e-03 1.480249e-02 7.280733e-04 -9.998902e-01 -7.631618e-02 9.998621e-01 7.523790e-03 1.480755e-02 -2.717806e-01
Tr_imu_velo 9.999976e-01 7.553071e-04 -2.035826e-03 -8.086759e-01 -7.854027e-04 9.998898e-01 -1.482298e-02 3.195559e-01 2.024406e-03 1.482454e-02 9.998881e-01 -7.997231e-01
"""

SPEC_ROW = "0 1 Car 0 0 -1.57 100 150 200 250 1.5 1.6 3.9 2.0 1.5 10.0 -1.57"

# ---------------------------------------------------------------- strategies

coord = st.floats(-80, 80, allow_nan=False, width=64)
pos = st.floats(0.05, 20, allow_nan=False)
yaw = st.floats(-math.pi, math.pi, allow_nan=False).filter(lambda a: a > -math.pi)
type_names = st.sampled_from(["Car", "Van", "Pedestrian", "Cyclist", "Truck", "Misc", "Person_sitting"])


@st.composite
def box2d(draw):
    x0, y0 = draw(st.floats(0, 1200)), draw(st.floats(0, 370))
    return Box2D(x0, y0, x0 + draw(pos), y0 + draw(pos))


@st.composite
def box3d(draw):
    return Box3D((draw(coord), draw(coord), draw(coord)), (draw(pos), draw(pos), draw(pos)), draw(yaw))


@st.composite
def label_row(draw, frame, track_id, with_score=False):
    return LabelRow(
        frame, track_id, draw(type_names),
        draw(st.floats(0, 1)), draw(st.integers(0, 3)), draw(yaw),
        draw(st.one_of(st.none(), box2d())), draw(st.one_of(st.none(), box3d())),
        draw(st.floats(0, 1)) if with_score else None,
    )


@st.composite
def label_sets(draw):
    keys = draw(st.lists(st.tuples(st.integers(0, 500), st.integers(0, 40)), unique=True, max_size=12))
    return [draw(label_row(f, i)) for f, i in keys]


@st.composite
def detection_sets(draw):
    frames = draw(st.lists(st.integers(0, 500), max_size=12))
    return [draw(label_row(f, -1, with_score=True)) for f in frames]


@st.composite
def calibrations(draw):
    k = np.array([[draw(st.floats(100, 2000)), 0, draw(st.floats(0, 1300)), draw(coord)],
                  [0, draw(st.floats(100, 2000)), draw(st.floats(0, 400)), draw(coord)],
                  [0, 0, 1, draw(st.floats(-1, 1))]])
    a = draw(st.floats(-math.pi, math.pi))
    rect = np.array([[math.cos(a), 0, math.sin(a)], [0, 1, 0], [-math.sin(a), 0, math.cos(a)]])
    velo = np.array([[draw(coord) for _ in range(4)] for _ in range(3)])
    return Calibration(k, rect, velo)


def _roundtrip_labels(rows):
    buf = io.StringIO()
    write_label_rows(rows, buf)
    return parse_label_file(io.StringIO(buf.getvalue()))


def _key(r):
    return (r.frame, r.track_id)


# ---------------------------------------------------------------- calibration

def test_parse_canonical_calibration():
    calib = parse_calibration(io.StringIO(CALIB_TEXT))
    assert calib.projection[0].tolist() == [721.5377, 0.0, 609.5593, 44.85728]
    assert calib.projection[2, 3] == 2.745884e-03
    assert calib.focal_length == 721.5377
    assert np.array_equal(calib.rectification, np.eye(3))
    assert calib.lidar_to_cam[0, 1] == -9.999714e-01


def test_calibration_missing_rectification_names_key():
    text = "\n".join(l for l in CALIB_TEXT.splitlines() if not l.startswith("R_rect"))
    with pytest.raises(ParseError, match="R0_rect"):
        parse_calibration(io.StringIO(text))


def test_calibration_arity_error_names_line_and_key():
    text = CALIB_TEXT.replace("P2: 7.215377e+02 ", "P2: ", 1)
    with pytest.raises(ParseError, match=r"line 3.*'P2'") as err:
        parse_calibration(io.StringIO(text))
    assert err.value.line == 3 and err.value.key == "P2"


def test_calibration_non_numeric():
    text = CALIB_TEXT.replace("R_rect 1 0 0", "R_rect 1 x 0")
    with pytest.raises(ParseError, match="non-numeric"):
        parse_calibration(io.StringIO(text))


@settings(max_examples=1000)
@given(calibrations())
def test_calibration_roundtrip_exact(calib):
    buf = io.StringIO()
    write_calibration(calib, buf)
    back = parse_calibration(io.StringIO(buf.getvalue()), calib.image_size)
    assert np.array_equal(back.projection, calib.projection)
    assert np.array_equal(back.rectification, calib.rectification)
    assert np.array_equal(back.lidar_to_cam, calib.lidar_to_cam)


# ---------------------------------------------------------------- label rows

def test_parse_spec_row():
    (track,) = parse_label_file(io.StringIO(SPEC_ROW + "\n"))
    assert track.track_id == 1 and track.class_id == "car"
    (row,) = track.entries
    assert row.frame == 0 and row.type_name == "Car"
    assert row.truncated == 0.0 and row.occluded == 0 and row.alpha == -1.57
    assert row.box2d == Box2D(100, 150, 200, 250)
    assert row.box3d.dims == (1.5, 1.6, 3.9)
    assert row.box3d.location == (2.0, 1.5, 10.0)
    assert row.box3d.yaw == -1.57
    assert row.score is None


def test_empty_stream():
    assert parse_label_file(io.StringIO("")) == []
    assert parse_label_file(io.StringIO("\n\n"), is_detection=True) == {}


def test_detection_row_requires_score():
    with pytest.raises(ParseError, match="no score"):
        parse_label_file(io.StringIO(SPEC_ROW + "\n"), is_detection=True)


def test_wrong_field_count_reports_line():
    with pytest.raises(ParseError, match="line 2"):
        parse_label_file(io.StringIO(SPEC_ROW + "\n0 1 Car 0 0\n"))


def test_duplicate_track_frame_rejected_but_dontcare_allowed():
    with pytest.raises(ParseError, match="duplicate"):
        parse_label_file(io.StringIO(SPEC_ROW + "\n" + SPEC_ROW + "\n"))
    dc = "0 -1 DontCare -1 -1 -10 10 10 50 50 -1 -1 -1 -1000 -1000 -1000 -10"
    tracks = parse_label_file(io.StringIO(dc + "\n" + dc + "\n"))
    assert len(tracks[0].entries) == 2 and tracks[0].entries[0].is_dontcare
    assert tracks[0].entries[0].box3d is None


def test_rows_sorted_by_frame_stably():
    text = SPEC_ROW.replace("0 1 Car", "5 1 Car") + "\n" + SPEC_ROW.replace("0 1 Car", "2 1 Car") + "\n"
    (track,) = parse_label_file(io.StringIO(text))
    assert track.frames == [2, 5]


@settings(max_examples=1000)
@given(label_sets())
def test_label_roundtrip_identity(rows):
    tracks = _roundtrip_labels(rows)
    back = [e for t in tracks for e in t.entries]
    assert sorted(back, key=_key) == sorted(rows, key=_key)
    assert [t.track_id for t in tracks] == sorted({r.track_id for r in rows})


@settings(max_examples=1000)
@given(detection_sets())
def test_detection_roundtrip_identity(rows):
    buf = io.StringIO()
    write_label_rows(rows, buf)
    per_frame = parse_label_file(io.StringIO(buf.getvalue()), is_detection=True)
    # stable sort by frame keeps within-frame order
    assert [r for f in sorted(per_frame) for r in per_frame[f]] == sorted(rows, key=lambda r: r.frame)


# ---------------------------------------------------------------- tracking output

def test_empty_tracking_output_is_empty_file():
    buf = io.StringIO()
    write_tracking_output({}, buf)
    assert buf.getvalue() == ""


def test_single_track_over_three_frames():
    box = Box3D((1.0, 1.5, 12.0), (1.5, 1.6, 3.9), 0.1)
    out = {k: [TrackOutput(7, "car", box, Box2D(10, 10, 60, 50), 0.9)] for k in range(3)}
    buf = io.StringIO()
    write_tracking_output(out, buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 3
    assert {l.split()[1] for l in lines} == {"7"}
    (track,) = parse_label_file(io.StringIO(buf.getvalue()))
    assert track.frames == [0, 1, 2]
    assert all(e.box3d == box and e.score == 0.9 for e in track.entries)


@settings(max_examples=200)
@given(st.dictionaries(st.integers(0, 50), st.lists(st.tuples(st.integers(0, 20), box3d(), box2d()), max_size=4,
                                                    unique_by=lambda t: t[0]), max_size=6))
def test_tracking_output_roundtrip(spec):
    out = {f: [TrackOutput(i, "car", b3, b2, 1.0) for i, b3, b2 in items] for f, items in spec.items()}
    buf = io.StringIO()
    write_tracking_output(out, buf)
    tracks = parse_label_file(io.StringIO(buf.getvalue()))
    got = sorted((e.frame, t.track_id, e.box3d, e.box2d) for t in tracks for e in t.entries)
    expect = sorted((f, i, b3, b2) for f, items in spec.items() for i, b3, b2 in items)
    assert got == expect


# ---------------------------------------------------------------- conversions and directories

def test_detection_conversions_roundtrip():
    d3 = Detection3D("pedestrian", Box3D((1, 1.6, 8), (1.7, 0.6, 0.8), 0.4), 0.75)
    assert detection3d_from_row(row_from_detection3d(4, d3)) == d3
    d2 = Detection2D("cyclist", Box2D(5, 6, 70, 90), 0.6)
    assert detection2d_from_row(row_from_detection2d(4, d2)) == d2


def test_detection_value_checks():
    with pytest.raises(ValueError):
        Detection2D("car", Box2D(0, 0, 1, 1), 1.5)
    with pytest.raises(ValueError):
        Detection3D("car", Box3D((0, 0, 5), (1, 1, 1)), float("nan"))


def test_sequence_directory_roundtrip(tmp_path):
    calib = Calibration.pinhole()
    box = Box3D((1.0, 1.65, 15.0), (1.5, 1.6, 3.9), 0.0)
    gt = [LabelRow(k, 3, "Car", 0.0, 0, 0.0, Box2D(500, 150, 600, 220), box) for k in (0, 1, 3)]
    frames = [FrameBundle("0007", k) for k in range(6)]
    frames[1].lidar_detections.append(Detection3D("car", box, 0.8))
    frames[2].camera_detections.append(Detection2D("car", Box2D(500, 150, 600, 220), 0.9))
    write_sequence(tmp_path, "0007", calib, gt, frames)

    assert list_sequences(tmp_path) == ["0007"]
    assert read_seqmap(tmp_path) == {"0007": 6}
    seq = load_sequence(tmp_path, "0007")
    # trailing empty frames survive through the seqmap
    assert len(seq) == 6
    assert [f.frame_index for f in seq.frames] == list(range(6))
    assert seq.frames[3].timestamp == 3 * 0.1
    assert seq.frames[1].lidar_detections[0].box == box
    assert seq.frames[2].camera_detections[0].score == 0.9
    assert [e.frame for e in seq.ground_truth[0].entries] == [0, 1, 3]
    assert np.array_equal(seq.calib.projection, calib.projection)
