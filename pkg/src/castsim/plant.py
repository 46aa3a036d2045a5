"""Stand-in for the physical string and camera.

The plant holds hidden string parameters and exposes only what a camera and
the arm's encoders would report: frames, the executed hand trajectory and,
for judging success, the true tip path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .arm import ArmConfig, HandTrajectory, MotionPlan, link_points, realize_trajectory
from .errors import InvalidStateError
from .observation import CameraModel, FrameSeries, capture_series
from .string_model import (DEFAULT_DT, GRAVITY, StringGeometry, StringParams, init_hanging_state,
                           simulate_rollout)

MISMATCH_MODES = ("none", "geometry", "stiffening")


@dataclass(frozen=True)
class PlantConfig:
    hidden_params: StringParams = field(repr=False)
    plant_geometry: StringGeometry = field(default_factory=StringGeometry)
    mismatch_mode: str = "none"
    kappa: float = 0.5

    def __post_init__(self):
        if self.mismatch_mode not in MISMATCH_MODES:
            raise InvalidStateError(f"mismatch_mode must be one of {MISMATCH_MODES}")
        if self.kappa < 0:
            raise InvalidStateError("kappa must be >= 0")

    @property
    def stiffening(self) -> float:
        return self.kappa if self.mismatch_mode == "stiffening" else 0.0


@dataclass(frozen=True)
class TargetSpec:
    x_ref: float
    y_ref: float
    w: float = 0.02
    h: float = 0.04

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise InvalidStateError("target tolerances w, h must be positive")


@dataclass(frozen=True)
class ObstacleSpec:
    corner: tuple = (0.0, 0.0)
    width: float = 0.0
    height: float = 0.0
    present: bool = False

    def __post_init__(self):
        if self.width < 0 or self.height < 0:
            raise InvalidStateError("obstacle extents must be non-negative")
        object.__setattr__(self, "corner", tuple(float(v) for v in self.corner))

    @property
    def bounds(self):
        x0, y0 = self.corner
        return x0, x0 + self.width, y0, y0 + self.height


class TipTrajectory(NamedTuple):
    times: np.ndarray
    points: np.ndarray  # (K, 2)


class Manipulation(NamedTuple):
    frames: FrameSeries
    tip_trajectory: TipTrajectory
    hand_trajectory: HandTrajectory
    string_positions: np.ndarray  # (K, n, 2) on the command grid, for collision checks


def execute_manipulation(plan: MotionPlan, plant: PlantConfig, arm: ArmConfig, camera: CameraModel,
                         tail: float = 0.4, sampling_period: float = 0.04, dt: float = DEFAULT_DT,
                         gravity=GRAVITY) -> Manipulation:
    hand = realize_trajectory(plan, arm, tail)
    init = init_hanging_state(hand[0][1], plant.plant_geometry, plant.hidden_params, gravity)
    rollout = simulate_rollout(plant.hidden_params, plant.plant_geometry, hand, init, dt=dt,
                               gravity=gravity, stiffening=plant.stiffening)
    frames = capture_series(rollout, camera, sampling_period)
    tips = TipTrajectory(rollout.times.copy(), rollout.tips.copy())
    return Manipulation(frames, tips, hand, rollout.positions)


def check_success(tip_trajectory, target: TargetSpec) -> Optional[float]:
    """Earliest time the tip lies in the closed box |dx| <= w, |dy| <= h."""
    times, pts = _tip_arrays(tip_trajectory)
    if times.size == 0:
        raise InvalidStateError("empty tip trajectory")
    # closed box; a few ulps of slack so a point built as x_ref + w counts
    eps = 1e-12
    inside = ((np.abs(pts[:, 0] - target.x_ref) <= target.w + eps)
              & (np.abs(pts[:, 1] - target.y_ref) <= target.h + eps))
    if not inside.any():
        return None
    return float(times[int(np.argmax(inside))])


def _tip_arrays(tip_trajectory):
    if isinstance(tip_trajectory, TipTrajectory) or (
            isinstance(tip_trajectory, tuple) and len(tip_trajectory) == 2
            and np.ndim(tip_trajectory[1]) == 2):
        return np.asarray(tip_trajectory[0], dtype=np.float64), np.asarray(tip_trajectory[1], dtype=np.float64)
    samples = list(tip_trajectory)
    return (np.array([t for t, _ in samples], dtype=np.float64),
            np.array([p for _, p in samples], dtype=np.float64).reshape(-1, 2))


def segments_hit_rectangle(p0: np.ndarray, p1: np.ndarray, bounds) -> np.ndarray:
    """Liang-Barsky test of segments p0->p1 (..., 2) against a closed rectangle."""
    xmin, xmax, ymin, ymax = bounds
    d = p1 - p0
    t0 = np.zeros(p0.shape[:-1])
    t1 = np.ones(p0.shape[:-1])
    hit = np.ones(p0.shape[:-1], dtype=bool)
    for p, q in ((-d[..., 0], p0[..., 0] - xmin), (d[..., 0], xmax - p0[..., 0]),
                 (-d[..., 1], p0[..., 1] - ymin), (d[..., 1], ymax - p0[..., 1])):
        parallel = p == 0
        hit &= ~(parallel & (q < 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(parallel, 0.0, q / np.where(parallel, 1.0, p))
        t0 = np.where(~parallel & (p < 0), np.maximum(t0, t), t0)
        t1 = np.where(~parallel & (p > 0), np.minimum(t1, t), t1)
    return hit & (t0 <= t1)


def check_collision(string_states, hand_trajectory: HandTrajectory, obstacle: ObstacleSpec,
                    arm: ArmConfig, angles_trajectory=None, until: float | None = None) -> Optional[float]:
    """Earliest sample at which a string segment or an arm link touches the obstacle."""
    if not obstacle.present:
        return None
    if hasattr(string_states, "positions"):
        pos = np.asarray(string_states.positions)
    elif isinstance(string_states, np.ndarray):
        pos = string_states
    else:
        pos = np.stack([s.positions for _, s in string_states])
    times = np.asarray(hand_trajectory.times)[: pos.shape[0]]
    angles = hand_trajectory.joint_angles if angles_trajectory is None else np.asarray(angles_trajectory)
    k = min(pos.shape[0], times.size)
    if until is not None:
        k = min(k, int(np.searchsorted(times, until, side="right")))
    if k == 0:
        return None
    b = obstacle.bounds
    hit = segments_hit_rectangle(pos[:k, :-1], pos[:k, 1:], b).any(axis=1)
    if pos.shape[1] == 1:
        hit = segments_hit_rectangle(pos[:k, 0], pos[:k, 0], b)
    if angles is not None:
        links = link_points(np.asarray(angles)[:k], arm)
        hit |= segments_hit_rectangle(links[:, :-1], links[:, 1:], b).any(axis=1)
    if not hit.any():
        return None
    return float(times[int(np.argmax(hit))])
