"""Affine power model in the effective processing target, and the yield metric.

The modeled draw is a single steady-state power per run::

    idle + eff_target * lidar_busy_fraction * lidar_active_power
         + camera_busy_fraction * camera_active_power   (camera always on)

It stands in for the median of a measured power trace. Profiles are fitted to
(effective target, watts) observations either by ordinary least squares or by
a minimax (Chebyshev) line that minimizes the worst residual.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigError, FitError, UndefinedMetricError

MODELS = ("pointpillars", "pv-rcnn", "second")
PROFILE_DIR_ENV = "FRAMEDROP_PROFILE_DIR"
FIT_METHODS = ("lstsq", "minimax")

_SHIPPED_DIR = Path(__file__).with_name("profiles")


@dataclass
class EnergyProfile:
    model_id: str
    idle_power: float
    lidar_active_power: float
    lidar_busy_fraction: float = 1.0
    camera_active_power: float = 0.0
    camera_busy_fraction: float = 0.0
    tracker: Optional[str] = None

    def __post_init__(self):
        if self.model_id not in MODELS:
            raise ConfigError(f"unknown detector model {self.model_id!r}", "model_id")
        for name in ("idle_power", "lidar_active_power", "camera_active_power"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative", name)
        for name in ("lidar_busy_fraction", "camera_busy_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]", name)

    @property
    def lidar_term(self) -> float:
        """Watts added per unit of effective target."""
        return self.lidar_busy_fraction * self.lidar_active_power

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "EnergyProfile":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


@dataclass
class ProfileFit:
    profile: EnergyProfile
    targets: np.ndarray
    observed: np.ndarray
    method: str
    residuals: np.ndarray = field(init=False)

    def __post_init__(self):
        self.residuals = self.observed - self.predicted

    @property
    def predicted(self) -> np.ndarray:
        return self.profile.idle_power + self.targets * self.profile.lidar_term

    @property
    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def simulate_draw(effective_target: float, profile: EnergyProfile, camera_always_on: bool = True) -> float:
    """Modeled median system draw (W) for a run at the given effective processing target."""
    draw = profile.idle_power + effective_target * profile.lidar_term
    if camera_always_on:
        draw += profile.camera_busy_fraction * profile.camera_active_power
    return draw


def _fit_minimax(p: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    # variables (a, b, t): minimize t subject to |a + b p_i - w_i| <= t
    ones = np.ones_like(p)
    A = np.vstack([np.column_stack([ones, p, -ones]), np.column_stack([-ones, -p, -ones])])
    rhs = np.concatenate([w, -w])
    res = linprog([0.0, 0.0, 1.0], A_ub=A, b_ub=rhs, bounds=[(None, None)] * 3, method="highs")
    if not res.success:
        raise FitError(f"minimax fit failed: {res.message}")
    return float(res.x[0]), float(res.x[1])


def fit_profile(observations: Sequence[tuple[float, float]], model_id: str, method: str = "lstsq",
                tracker: Optional[str] = None) -> ProfileFit:
    """Fit ``watts ~ idle + slope * effective_target``.

    The slope becomes the lidar term (``lidar_busy_fraction`` 1). Camera power
    is left at zero because measured draws already contain it.
    """
    if method not in FIT_METHODS:
        raise ConfigError(f"unknown fit method {method!r}", "method")
    obs = np.asarray(observations, dtype=float).reshape(-1, 2)
    p, w = obs[:, 0], obs[:, 1]
    if len(np.unique(p)) < 2:
        raise FitError("need at least two distinct effective targets")
    if method == "lstsq":
        A = np.column_stack([np.ones_like(p), p])
        (a, b), *_ = np.linalg.lstsq(A, w, rcond=None)
    else:
        a, b = _fit_minimax(p, w)
    if a < 0 or b < 0:
        raise FitError(f"fitted line has negative coefficients (idle {a:.3f} W, slope {b:.3f} W)")
    profile = EnergyProfile(model_id, float(a), float(b), 1.0, 0.0, 0.0, tracker)
    return ProfileFit(profile, p, w, method)


@dataclass(frozen=True)
class YieldInput:
    draw_100: float
    hota_100: float
    draw_target: float
    hota_target: float


def compute_yield(y: YieldInput) -> float:
    """Watts saved per HOTA point lost, relative to the full-rate run."""
    dh = y.hota_100 - y.hota_target
    if dh == 0:
        raise UndefinedMetricError("yield is undefined when HOTA does not change")
    return (y.draw_100 - y.draw_target) / dh


# ---------------------------------------------------------------- profile files

def profile_dir() -> Path:
    return Path(os.environ.get(PROFILE_DIR_ENV, _SHIPPED_DIR))


def profile_name(model_id: str, tracker: Optional[str] = None) -> str:
    return f"{tracker}-{model_id}" if tracker else model_id


def load_profile(ref: str) -> EnergyProfile:
    """Load a profile from a JSON path, or by name from the profile directory.

    Names look like ``castrack-pv-rcnn``; the shipped directory is searched when
    the configured one lacks the file.
    """
    path = Path(ref)
    if not path.suffix:
        candidates = [profile_dir() / f"{ref}.json", _SHIPPED_DIR / f"{ref}.json"]
        path = next((c for c in candidates if c.exists()), candidates[0])
    if not path.exists():
        raise ConfigError(f"energy profile {ref!r} not found", "profile")
    with open(path) as fh:
        return EnergyProfile.from_dict(json.load(fh))


def save_profile(profile: EnergyProfile, path) -> None:
    Path(path).write_text(profile.to_json() + "\n")
