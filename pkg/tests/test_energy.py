import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from framedrop import reference_data as ref
from framedrop.energy import (PROFILE_DIR_ENV, EnergyProfile, YieldInput, compute_yield, fit_profile, load_profile,
                              profile_dir, profile_name, save_profile, simulate_draw)
from framedrop.errors import ConfigError, FitError, UndefinedMetricError

PROFILE = EnergyProfile("pv-rcnn", idle_power=200.0, lidar_active_power=300.0, lidar_busy_fraction=0.5,
                        camera_active_power=40.0, camera_busy_fraction=0.25)


def test_profile_validation():
    with pytest.raises(ConfigError):
        EnergyProfile("yolo", 1.0, 1.0)
    with pytest.raises(ConfigError):
        EnergyProfile("second", -1.0, 1.0)
    with pytest.raises(ConfigError):
        EnergyProfile("second", 1.0, 1.0, lidar_busy_fraction=1.5)


def test_draw_at_zero_target_without_camera_is_idle():
    assert simulate_draw(0.0, PROFILE, camera_always_on=False) == 200.0


def test_draw_at_full_target_saturates():
    assert simulate_draw(1.0, PROFILE, camera_always_on=False) == 200.0 + 150.0
    assert simulate_draw(1.0, PROFILE) == 200.0 + 150.0 + 10.0


@given(st.floats(0, 1), st.floats(0, 1))
def test_draw_monotone_in_target(a, b):
    lo, hi = sorted((a, b))
    assert simulate_draw(lo, PROFILE) <= simulate_draw(hi, PROFILE)


@pytest.mark.parametrize("method", ["lstsq", "minimax"])
def test_exact_affine_data_is_recovered(method):
    pts = [(p, 200 + 100 * p) for p in (1.0, 0.5, 1 / 3, 0.2, 0.1)]
    fit = fit_profile(pts, "second", method)
    assert fit.profile.idle_power == pytest.approx(200.0)
    assert fit.profile.lidar_term == pytest.approx(100.0)
    assert fit.max_abs_residual == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("method", ["lstsq", "minimax"])
def test_two_point_line(method):
    fit = fit_profile([(0.1, 256.0), (1.0, 461.0)], "pv-rcnn", method)
    slope = (461 - 256) / 0.9
    assert fit.profile.lidar_term == pytest.approx(slope)
    assert fit.profile.idle_power == pytest.approx(256 - 0.1 * slope)
    assert (round(fit.profile.lidar_term, 1), round(fit.profile.idle_power, 1)) == (227.8, 233.2)


def test_fit_errors():
    with pytest.raises(FitError):
        fit_profile([(0.5, 300.0), (0.5, 310.0)], "second")
    with pytest.raises(FitError):
        fit_profile([(0.1, 400.0), (1.0, 100.0)], "second")      # negative slope
    with pytest.raises(ConfigError):
        fit_profile([(0.1, 1.0), (1.0, 2.0)], "second", method="ransac")


def test_lstsq_matches_normal_equations():
    pts = ref.baseline_draw_points("castrack", "pv-rcnn")
    p, w = np.array(pts).T
    # closed-form simple regression
    slope = np.sum((p - p.mean()) * (w - w.mean())) / np.sum((p - p.mean()) ** 2)
    fit = fit_profile(pts, "pv-rcnn", "lstsq")
    assert fit.profile.lidar_term == pytest.approx(slope)
    assert fit.profile.idle_power == pytest.approx(w.mean() - slope * p.mean())
    assert np.all(fit.residuals != 0)


@given(st.lists(st.tuples(st.floats(0.05, 1.0), st.floats(200, 500)), min_size=3, max_size=8))
def test_minimax_never_worse_than_lstsq_in_worst_case(pts):
    if len({round(p, 6) for p, _ in pts}) < 2:
        return
    try:
        ls = fit_profile(pts, "second", "lstsq")
        mm = fit_profile(pts, "second", "minimax")
    except FitError:
        return
    assert mm.max_abs_residual <= ls.max_abs_residual + 1e-6


def test_pv_rcnn_half_target_within_residual_of_reference_draw():
    fit = fit_profile(ref.baseline_draw_points("castrack", "pv-rcnn"), "pv-rcnn", "minimax")
    predicted = simulate_draw(0.5, fit.profile)
    assert abs(predicted - 384) <= fit.max_abs_residual + 1e-9
    assert fit.max_abs_residual < 40


def test_shipped_profiles_match_refits():
    for tracker, model in ref.BASELINE:
        shipped = load_profile(profile_name(model, tracker))
        fit = fit_profile(ref.baseline_draw_points(tracker, model), model, "minimax", tracker)
        assert shipped.idle_power == pytest.approx(fit.profile.idle_power, abs=1e-6)
        assert shipped.lidar_term == pytest.approx(fit.profile.lidar_term, abs=1e-6)


# ---------------------------------------------------------------- yield

def test_yield_examples():
    assert compute_yield(YieldInput(461, 78.0, 384, 72.9)) == pytest.approx(77 / 5.1)
    assert round(compute_yield(YieldInput(461, 78.0, 384, 72.9)), 3) == 15.098
    assert round(compute_yield(YieldInput(464, 66.5, 385, 65.0)), 2) == 52.67


def test_yield_zero_numerator_and_zero_denominator():
    assert compute_yield(YieldInput(400, 70.0, 400, 60.0)) == 0.0
    with pytest.raises(UndefinedMetricError):
        compute_yield(YieldInput(400, 70.0, 300, 70.0))


# ---------------------------------------------------------------- profile files

def test_profile_round_trip(tmp_path):
    path = tmp_path / "p.json"
    save_profile(PROFILE, path)
    assert load_profile(str(path)) == PROFILE
    assert json.loads(path.read_text())["model_id"] == "pv-rcnn"


def test_profile_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(PROFILE_DIR_ENV, str(tmp_path))
    assert profile_dir() == tmp_path
    save_profile(PROFILE, tmp_path / "lab-pv-rcnn.json")
    assert load_profile("lab-pv-rcnn") == PROFILE
    # shipped profiles stay reachable as a fallback
    assert load_profile("castrack-second").model_id == "second"


def test_missing_profile(monkeypatch, tmp_path):
    monkeypatch.setenv(PROFILE_DIR_ENV, str(tmp_path))
    with pytest.raises(ConfigError):
        load_profile("nope-pv-rcnn")
    assert profile_name("second") == "second"
