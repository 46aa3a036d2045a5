"""Planar 3-DOF arm: kinematics, limit checks and randomized Bezier velocity plans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import comb

from .errors import InvalidStateError, LimitViolation
from .string_model import HandPose

DEGREE = 5
T_RANGE = (0.2, 1.5)


@dataclass(frozen=True)
class ArmConfig:
    link_lengths: tuple = (0.20, 0.20, 0.185)
    joint_limits: tuple = ((-2.6, 2.6),) * 3
    joint_velocity_limits: tuple = (25.0, 25.0, 25.0)
    joint_acceleration_limits: tuple = (600.0, 600.0, 600.0)
    composite_speed_limit: float = 21.8
    command_period: float = 0.005
    base_position: tuple = (0.3, 0.3)

    def __post_init__(self):
        object.__setattr__(self, "link_lengths", tuple(float(v) for v in self.link_lengths))
        object.__setattr__(self, "joint_limits", tuple((float(a), float(b)) for a, b in self.joint_limits))
        object.__setattr__(self, "joint_velocity_limits", tuple(float(v) for v in self.joint_velocity_limits))
        object.__setattr__(self, "joint_acceleration_limits",
                           tuple(float(v) for v in self.joint_acceleration_limits))
        object.__setattr__(self, "base_position", tuple(float(v) for v in self.base_position))
        if len(self.link_lengths) != 3 or any(v <= 0 for v in self.link_lengths):
            raise InvalidStateError("need three positive link lengths")
        if len(self.joint_limits) != 3 or any(lo >= hi for lo, hi in self.joint_limits):
            raise InvalidStateError("joint limits must be three (min, max) pairs with min < max")
        if len(self.joint_velocity_limits) != 3 or any(v <= 0 for v in self.joint_velocity_limits):
            raise InvalidStateError("joint velocity limits must be three positive values")
        # zero acceleration limits are allowed: they pin the plan to rest
        if len(self.joint_acceleration_limits) != 3 or any(v < 0 for v in self.joint_acceleration_limits):
            raise InvalidStateError("joint acceleration limits must be three non-negative values")
        if self.composite_speed_limit <= 0 or self.command_period <= 0:
            raise InvalidStateError("speed limit and command period must be positive")

    @property
    def reach(self) -> float:
        return sum(self.link_lengths)


@dataclass
class MotionPlan:
    initial_angles: np.ndarray
    T: float
    control_velocities: np.ndarray  # (3, 6), V_0..V_5 per joint

    def __post_init__(self):
        self.initial_angles = np.array(self.initial_angles, dtype=np.float64).reshape(3)
        self.control_velocities = np.array(self.control_velocities, dtype=np.float64).reshape(3, DEGREE + 1)
        self.T = float(self.T)
        if not self.T > 0:
            raise InvalidStateError("motion duration T must be positive")
        if np.any(self.control_velocities[:, 0] != 0) or np.any(self.control_velocities[:, -1] != 0):
            raise InvalidStateError("V_0 and V_5 must be exactly zero")

    def to_dict(self) -> dict:
        return {
            "initial_angles_rad": [float(v) for v in self.initial_angles],
            "T_s": self.T,
            "control_velocities_rad_s": [[float(v) for v in row] for row in self.control_velocities],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MotionPlan":
        return cls(data["initial_angles_rad"], data["T_s"], data["control_velocities_rad_s"])


def forward_kinematics(angles, config: ArmConfig) -> HandPose:
    angles = np.asarray(angles, dtype=np.float64)
    if not np.isfinite(angles).all():
        raise InvalidStateError("joint angles must be finite")
    phi = np.cumsum(angles)
    L = np.asarray(config.link_lengths)
    pos = np.asarray(config.base_position) + np.array([np.sum(L * np.cos(phi)), np.sum(L * np.sin(phi))])
    return HandPose(pos, float(phi[-1]))


def link_points(angles: np.ndarray, config: ArmConfig) -> np.ndarray:
    """Joint positions (..., 4, 2) from base to hand for angle arrays (..., 3)."""
    phi = np.cumsum(angles, axis=-1)
    L = np.asarray(config.link_lengths)
    steps = np.stack([L * np.cos(phi), L * np.sin(phi)], axis=-1)
    pts = np.concatenate([np.zeros(steps.shape[:-2] + (1, 2)), np.cumsum(steps, axis=-2)], axis=-2)
    return pts + np.asarray(config.base_position)


def _bernstein(u, degree=DEGREE) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)[..., None]
    k = np.arange(degree + 1)
    return comb(degree, k) * u ** k * (1.0 - u) ** (degree - k)


def bezier_velocity(controls, T: float, t: float) -> float:
    """Velocity at time t of the degree-5 Bezier curve with control values V_0..V_5.

    Control times are uniform (t_k = kT/5), so the time coordinate is linear in
    the curve parameter and u = t/T.  Evaluated by de Casteljau.
    """
    if not (0.0 <= t <= T):
        raise InvalidStateError(f"t={t} outside [0, {T}]")
    u = t / T
    b = [float(c) for c in controls]
    for r in range(1, len(b)):
        for i in range(len(b) - r):
            b[i] = (1.0 - u) * b[i] + u * b[i + 1]
    return b[0]


def bezier_velocity_array(controls: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized Bernstein evaluation: controls (J, 6), u (K,) -> (K, J)."""
    return _bernstein(u) @ np.asarray(controls).T


def bezier_displacement(controls: np.ndarray, T: float, u: np.ndarray) -> np.ndarray:
    """Exact integral of the velocity curve from 0 to uT: controls (J, 6), u (K,) -> (K, J)."""
    basis6 = _bernstein(u, DEGREE + 1)  # (K, 7)
    # int_0^u B_{k,5} = (1/6) sum_{j>k} B_{j,6}(u)
    tail = np.cumsum(basis6[..., ::-1], axis=-1)[..., ::-1][..., 1:]  # (K, 6): sum_{j>=k+1}
    return (T / (DEGREE + 1)) * tail @ np.asarray(controls).T


def _quantize_T(T: float, period: float) -> float:
    return round(T / period) * period


def generate_motion(rng: np.random.Generator, config: ArmConfig, T_range=T_RANGE) -> MotionPlan:
    lo = np.array([a for a, _ in config.joint_limits])
    hi = np.array([b for _, b in config.joint_limits])
    angles = rng.uniform(lo, hi)
    T = _quantize_T(rng.uniform(T_range[0], T_range[1]), config.command_period)
    amax = np.asarray(config.joint_acceleration_limits)[:, None]
    alpha = rng.uniform(-1.0, 1.0, size=(3, DEGREE - 1)) * amax
    V = np.zeros((3, DEGREE + 1))
    # uniform speed inside each of the five intervals: V_n = alpha_n * (t_n - t_{n-1})
    V[:, 1:DEGREE] = alpha * (T / DEGREE)
    return MotionPlan(angles, T, V)


def perturb_motion(prev: MotionPlan, rng: np.random.Generator, iteration: int, config: ArmConfig,
                   T_range=T_RANGE, fraction: float = 0.25, scale: float = 1.0) -> MotionPlan:
    """Small random change of a previous plan; the initial pose is kept."""
    if iteration < 2:
        raise InvalidStateError("perturbation applies from the second iteration on")
    width = T_range[1] - T_range[0]
    dT = rng.uniform(-1.0, 1.0) * scale * width / 4.0
    T = _quantize_T(float(np.clip(prev.T + dT, T_range[0], T_range[1])), config.command_period)
    T = float(np.clip(T, T_range[0], T_range[1]))
    half = np.asarray(config.joint_acceleration_limits)[:, None] * prev.T / DEGREE
    noise = rng.uniform(-1.0, 1.0, size=(3, DEGREE - 1)) * scale * fraction * half
    V = prev.control_velocities.copy()
    V[:, 1:DEGREE] += noise
    if scale == 0:
        T = prev.T
    return MotionPlan(prev.initial_angles.copy(), T, V)


class HandTrajectory(Sequence):
    """Hand samples on the command grid; indexes as ``(time, HandPose)``.

    ``orientations`` is the grasp axis, continuous (not wrapped): it points
    straight down at t = 0 and turns with the sum of joint angles.
    """

    def __init__(self, times, positions, orientations, velocities=None, angular_velocities=None,
                 joint_angles=None, joint_velocities=None, motion_end=None):
        self.times = np.asarray(times, dtype=np.float64)
        self.positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        self.orientations = np.asarray(orientations, dtype=np.float64)
        k = self.times.size
        if velocities is None:
            velocities = _fd(self.positions, self.times)
        if angular_velocities is None:
            angular_velocities = _fd(self.orientations[:, None], self.times)[:, 0]
        self.velocities = np.asarray(velocities, dtype=np.float64).reshape(k, 2)
        self.angular_velocities = np.asarray(angular_velocities, dtype=np.float64).reshape(k)
        self.joint_angles = None if joint_angles is None else np.asarray(joint_angles)
        self.joint_velocities = None if joint_velocities is None else np.asarray(joint_velocities)
        self.motion_end = float(self.times[-1]) if motion_end is None else float(motion_end)

    def __len__(self):
        return self.times.size

    def __getitem__(self, i):
        return float(self.times[i]), HandPose(self.positions[i], self.orientations[i],
                                              self.velocities[i], self.angular_velocities[i])

    @property
    def period(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def link_points(self, config: ArmConfig) -> np.ndarray:
        if self.joint_angles is None:
            raise InvalidStateError("trajectory carries no joint angles")
        return link_points(self.joint_angles, config)


def _fd(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    if times.size < 2:
        return np.zeros_like(values)
    return np.gradient(values, times, axis=0)


def hand_velocities(angles: np.ndarray, rates: np.ndarray, config: ArmConfig) -> np.ndarray:
    """Jacobian map of joint rates to hand velocity for arrays (K, 3) -> (K, 2)."""
    phi = np.cumsum(angles, axis=-1)
    phidot = np.cumsum(rates, axis=-1)
    L = np.asarray(config.link_lengths)
    vx = -np.sum(L * np.sin(phi) * phidot, axis=-1)
    vy = np.sum(L * np.cos(phi) * phidot, axis=-1)
    return np.stack([vx, vy], axis=-1)


def realize_trajectory(plan: MotionPlan, config: ArmConfig, tail: float = 0.4,
                       validate: bool = True) -> HandTrajectory:
    """Sample the plan on the command grid, append a stationary tail, check limits."""
    p = config.command_period
    n_motion = int(round(plan.T / p))
    if abs(n_motion * p - plan.T) > 1e-9:
        raise InvalidStateError(f"T={plan.T} is not a multiple of the command period {p}")
    n_tail = int(math.floor(tail / p + 1e-9))
    k = np.arange(n_motion + n_tail + 1)
    times = k * p
    u = np.minimum(k, n_motion) / n_motion
    rates = bezier_velocity_array(plan.control_velocities, u)
    rates[k > n_motion] = 0.0
    angles = plan.initial_angles + bezier_displacement(plan.control_velocities, plan.T, u)
    pts = link_points(angles, config)
    positions = pts[:, -1, :]
    phi_sum = np.sum(angles, axis=1)
    orient = phi_sum - phi_sum[0] - math.pi / 2.0
    vel = hand_velocities(angles, rates, config)
    traj = HandTrajectory(times, positions, orient, vel, np.sum(rates, axis=1), angles, rates,
                          motion_end=plan.T)
    if validate:
        check_limits(traj, config)
    return traj


def limit_violations(traj: HandTrajectory, config: ArmConfig):
    """All (time, joint, limit-name) violations, in time order."""
    found = []
    lo = np.array([a for a, _ in config.joint_limits])
    hi = np.array([b for _, b in config.joint_limits])
    vmax = np.asarray(config.joint_velocity_limits)
    speed = np.hypot(traj.velocities[:, 0], traj.velocities[:, 1])
    for i, t in enumerate(traj.times):
        for j in range(3):
            a = traj.joint_angles[i, j]
            if a < lo[j] or a > hi[j]:
                found.append((float(t), j, "joint_limit"))
            if abs(traj.joint_velocities[i, j]) > vmax[j]:
                found.append((float(t), j, "joint_velocity_limit"))
        if speed[i] > config.composite_speed_limit:
            found.append((float(t), None, "composite_speed_limit"))
    return found


def check_limits(traj: HandTrajectory, config: ArmConfig) -> None:
    lo = np.array([a for a, _ in config.joint_limits])
    hi = np.array([b for _, b in config.joint_limits])
    vmax = np.asarray(config.joint_velocity_limits)
    bad = ((traj.joint_angles < lo) | (traj.joint_angles > hi)
           | (np.abs(traj.joint_velocities) > vmax)).any(axis=1)
    speed = np.hypot(traj.velocities[:, 0], traj.velocities[:, 1])
    bad |= speed > config.composite_speed_limit
    if not bad.any():
        return
    i = int(np.argmax(bad))
    t = float(traj.times[i])
    joint, limit = None, "composite_speed_limit"
    for j in range(3):
        if not lo[j] <= traj.joint_angles[i, j] <= hi[j]:
            joint, limit = j, "joint_limit"
            break
        if abs(traj.joint_velocities[i, j]) > vmax[j]:
            joint, limit = j, "joint_velocity_limit"
            break
    where = "hand" if joint is None else f"joint {joint}"
    raise LimitViolation(f"{where} exceeds {limit} at t={t:.3f} s", joint=joint, limit=limit, time=t)
