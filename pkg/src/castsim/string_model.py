"""Planar mass-spring-damper string driven kinematically at its grasped end.

All coefficients are per unit point mass, so accelerations and forces are
interchangeable.  Point 0 is the grasped point; it follows the hand exactly
and its computed acceleration is discarded by the integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterator, Sequence

import numpy as np
from numba import njit, prange

from .errors import DivergenceError, InvalidStateError

PARAM_NAMES = ("k_s", "c_s", "k_h", "c_h", "C_c1", "C_c2", "k_ph", "c_ph")
GRAVITY = (0.0, -9.81)
DEFAULT_DT = 5e-5
_EPS = 1e-12
# positions beyond this (m) are treated as blow-up
_DIVERGED = 1e4


@dataclass(frozen=True)
class StringParams:
    k_s: float
    c_s: float
    k_h: float
    c_h: float
    C_c1: float
    C_c2: float
    k_ph: float
    c_ph: float

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not math.isfinite(v) or v <= 0.0:
                raise InvalidStateError(f"{f.name} must be finite and > 0, got {v!r}")
            object.__setattr__(self, f.name, v)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "StringParams":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(PARAM_NAMES),):
            raise InvalidStateError(f"expected 8 parameter values, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def from_dict(cls, data: dict) -> "StringParams":
        missing = [name for name in PARAM_NAMES if name not in data]
        if missing:
            raise InvalidStateError(f"missing string parameters: {missing}")
        return cls(**{name: data[name] for name in PARAM_NAMES})


@dataclass(frozen=True)
class StringGeometry:
    n: int = 10
    total_length: float = 0.3

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidStateError(f"mass-point count must be an integer >= 2, got {self.n!r}")
        if not self.total_length > 0:
            raise InvalidStateError("total_length must be positive")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "total_length", float(self.total_length))

    @property
    def rest_length(self) -> float:
        return self.total_length / (self.n - 1)


def _as_points(a, n=None, what="positions") -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or (n is not None and arr.shape[0] != n):
        raise InvalidStateError(f"{what} must have shape (n, 2), got {arr.shape}")
    return arr


@dataclass
class StringState:
    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = _as_points(self.positions)
        self.velocities = _as_points(self.velocities, self.positions.shape[0], "velocities")
        self.time = float(self.time)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def tip(self) -> np.ndarray:
        return self.positions[-1]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.positions).all() and np.isfinite(self.velocities).all())


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass
class HandPose:
    position: np.ndarray
    orientation: float = 0.0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    angular_velocity: float = 0.0

    def __post_init__(self):
        self.position = np.array(self.position, dtype=np.float64).reshape(2)
        self.velocity = np.array(self.velocity, dtype=np.float64).reshape(2)
        self.orientation = wrap_angle(float(self.orientation))
        self.angular_velocity = float(self.angular_velocity)


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _accelerations(pos, vel, rest, prm, kappa, psi, psi_dot, gx, gy, out):
    n = pos.shape[0]
    ks, cs, kh, ch, cc1, cc2, kph, cph = prm[0], prm[1], prm[2], prm[3], prm[4], prm[5], prm[6], prm[7]
    ux = np.empty(n - 1)
    uy = np.empty(n - 1)
    ln = np.empty(n - 1)
    om = np.empty(n - 1)

    for i in range(n):
        vx = vel[i, 0]
        vy = vel[i, 1]
        s = math.sqrt(vx * vx + vy * vy)
        c = cc1 + cc2 * s
        out[i, 0] = gx - c * vx
        out[i, 1] = gy - c * vy

    for j in range(n - 1):
        dx = pos[j + 1, 0] - pos[j, 0]
        dy = pos[j + 1, 1] - pos[j, 1]
        dvx = vel[j + 1, 0] - vel[j, 0]
        dvy = vel[j + 1, 1] - vel[j, 1]
        l = math.sqrt(dx * dx + dy * dy)
        ln[j] = l
        if l > _EPS:
            ex = dx / l
            ey = dy / l
            # rotation rate of the segment
            om[j] = (ex * dvy - ey * dvx) / l
        else:
            ex = 0.0
            ey = 0.0
            om[j] = 0.0
        ux[j] = ex
        uy[j] = ey
        f = ks * (l - rest) + cs * (dvx * ex + dvy * ey)
        out[j, 0] += f * ex
        out[j, 1] += f * ey
        out[j + 1, 0] -= f * ex
        out[j + 1, 1] -= f * ey

    # interior hinges: potential 0.5*k_h*phi^2, phi = signed turn angle
    for i in range(1, n - 1):
        a = i - 1
        if ln[a] <= _EPS or ln[i] <= _EPS:
            continue
        cr = ux[a] * uy[i] - uy[a] * ux[i]
        dt_ = ux[a] * ux[i] + uy[a] * uy[i]
        phi = math.atan2(cr, dt_)
        tau = -(kh * phi + ch * (om[i] - om[a])) * (1.0 + kappa * phi * phi)
        # left normals scaled by 1/length are the gradients of segment angles
        gbx = -uy[i] / ln[i]
        gby = ux[i] / ln[i]
        gax = -uy[a] / ln[a]
        gay = ux[a] / ln[a]
        out[i + 1, 0] += tau * gbx
        out[i + 1, 1] += tau * gby
        out[a, 0] += tau * gax
        out[a, 1] += tau * gay
        out[i, 0] -= tau * (gax + gbx)
        out[i, 1] -= tau * (gay + gby)

    # grasp hinge between hand axis and first segment
    if ln[0] > _EPS:
        hx = math.cos(psi)
        hy = math.sin(psi)
        phi0 = math.atan2(hx * uy[0] - hy * ux[0], hx * ux[0] + hy * uy[0])
        tau0 = -kph * phi0 - cph * (om[0] - psi_dot)
        gx0 = -uy[0] / ln[0]
        gy0 = ux[0] / ln[0]
        out[1, 0] += tau0 * gx0
        out[1, 1] += tau0 * gy0
        out[0, 0] -= tau0 * gx0
        out[0, 1] -= tau0 * gy0


@njit(cache=True)
def _diverged(pos, vel):
    for i in range(pos.shape[0]):
        for k in range(2):
            p = pos[i, k]
            v = vel[i, k]
            if not (abs(p) < _DIVERGED) or not (abs(v) < 1e8):
                return True
    return False


@njit(cache=True)
def _rollout_core(prm, kappa, rest, gx, gy, hand_xy, hand_psi, n_samples, period, substeps,
                  pos, vel, record_idx, out_pos, out_vel):
    """Integrate in place; returns -1 or the global substep index of blow-up."""
    n = pos.shape[0]
    acc = np.empty((n, 2))
    dt = period / substeps
    r = 0
    pos[0, 0] = hand_xy[0, 0]
    pos[0, 1] = hand_xy[0, 1]
    if r < record_idx.shape[0] and record_idx[r] == 0:
        out_pos[r] = pos
        out_vel[r] = vel
        r += 1
    for k in range(n_samples - 1):
        if r >= record_idx.shape[0]:
            break
        x0 = hand_xy[k, 0]
        y0 = hand_xy[k, 1]
        p0 = hand_psi[k]
        hvx = (hand_xy[k + 1, 0] - x0) / period
        hvy = (hand_xy[k + 1, 1] - y0) / period
        hw = (hand_psi[k + 1] - p0) / period
        vel[0, 0] = hvx
        vel[0, 1] = hvy
        for s in range(substeps):
            frac = s / substeps
            _accelerations(pos, vel, rest, prm, kappa, p0 + frac * (hand_psi[k + 1] - p0), hw, gx, gy, acc)
            for i in range(1, n):
                vel[i, 0] += acc[i, 0] * dt
                vel[i, 1] += acc[i, 1] * dt
                pos[i, 0] += vel[i, 0] * dt
                pos[i, 1] += vel[i, 1] * dt
            if s == substeps - 1:
                pos[0, 0] = hand_xy[k + 1, 0]
                pos[0, 1] = hand_xy[k + 1, 1]
            else:
                f1 = (s + 1) / substeps
                pos[0, 0] = x0 + f1 * (hand_xy[k + 1, 0] - x0)
                pos[0, 1] = y0 + f1 * (hand_xy[k + 1, 1] - y0)
        if _diverged(pos, vel):
            return (k + 1) * substeps
        if record_idx[r] == k + 1:
            out_pos[r] = pos
            out_vel[r] = vel
            r += 1
    return -1


@njit(cache=True, parallel=True)
def _rollout_params_batch(prms, kappa, rest, gx, gy, hand_xy, hand_psi, period, substeps,
                          pos0, vel0, record_idx, out_pos, status):
    n_samples = record_idx[-1] + 1
    for b in prange(prms.shape[0]):
        pos = pos0[b].copy()
        vel = vel0[b].copy()
        scratch_vel = np.empty(out_pos.shape[1:])
        status[b] = _rollout_core(prms[b], kappa, rest, gx, gy, hand_xy, hand_psi, n_samples,
                                  period, substeps, pos, vel, record_idx, out_pos[b], scratch_vel)


@njit(cache=True, parallel=True)
def _rollout_hands_batch(prm, kappa, rest, gx, gy, hand_xy, hand_psi, lengths, period, substeps,
                         pos0, vel0, out_pos, status):
    for b in prange(hand_xy.shape[0]):
        pos = pos0[b].copy()
        vel = vel0[b].copy()
        m = lengths[b]
        idx = np.arange(m)
        scratch_vel = np.empty((m, pos.shape[0], 2))
        status[b] = _rollout_core(prm, kappa, rest, gx, gy, hand_xy[b], hand_psi[b], m,
                                  period, substeps, pos, vel, idx, out_pos[b, :m], scratch_vel)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def _check_state(state: StringState, geometry: StringGeometry):
    if state.n != geometry.n:
        raise InvalidStateError(f"state has {state.n} points, geometry expects {geometry.n}")
    if not state.is_finite():
        raise InvalidStateError("state contains non-finite values")


def _check_hand(hand: HandPose):
    if not (np.isfinite(hand.position).all() and np.isfinite(hand.velocity).all()
            and math.isfinite(hand.orientation) and math.isfinite(hand.angular_velocity)):
        raise InvalidStateError("hand pose contains non-finite values")


def net_accelerations(state: StringState, params: StringParams, geometry: StringGeometry,
                      hand: HandPose, gravity=GRAVITY, stiffening: float = 0.0) -> np.ndarray:
    """Per-point accelerations (n, 2) from every force term of the string model.

    ``stiffening`` scales hinge torques by ``1 + stiffening * phi**2``; zero gives
    the linear model.
    """
    _check_state(state, geometry)
    _check_hand(hand)
    out = np.empty((state.n, 2))
    _accelerations(state.positions, state.velocities, geometry.rest_length, params.as_array(),
                   float(stiffening), hand.orientation, hand.angular_velocity,
                   float(gravity[0]), float(gravity[1]), out)
    return out


def euler_step(state: StringState, params: StringParams, geometry: StringGeometry,
               hand_now: HandPose, hand_next: HandPose, dt: float,
               gravity=GRAVITY, stiffening: float = 0.0, step_index: int = 0) -> StringState:
    """One explicit Euler step (velocity first, then position with the new velocity)."""
    if not dt > 0:
        raise InvalidStateError("dt must be positive")
    _check_hand(hand_next)
    acc = net_accelerations(state, params, geometry, hand_now, gravity, stiffening)
    vel = state.velocities.copy()
    pos = state.positions.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        vel[1:] += acc[1:] * dt
        pos[1:] += vel[1:] * dt
    pos[0] = hand_next.position
    vel[0] = hand_next.velocity
    if _diverged(pos, vel):
        raise DivergenceError(f"integration diverged at step {step_index}", step=step_index,
                              time=state.time + dt)
    return StringState(pos, vel, state.time + dt)


def init_hanging_state(grasp: HandPose, geometry: StringGeometry, params: StringParams,
                       gravity=GRAVITY) -> StringState:
    """Straight hang along gravity with each segment pre-stretched by the weight below it."""
    _check_hand(grasp)
    g = np.asarray(gravity, dtype=np.float64)
    gnorm = float(np.hypot(*g))
    down = g / gnorm if gnorm > 0 else np.array([0.0, -1.0])
    n = geometry.n
    below = np.arange(n - 1, 0, -1)  # points hanging under each segment
    seg = geometry.rest_length + gnorm * below / params.k_s
    offsets = np.concatenate([[0.0], np.cumsum(seg)])
    pos = grasp.position[None, :] + offsets[:, None] * down[None, :]
    pos[0] = grasp.position
    return StringState(pos, np.zeros((n, 2)), 0.0)


def hanging_length(geometry: StringGeometry, params: StringParams, g: float = 9.81) -> float:
    """Grasp-to-tip distance of the static hanging string."""
    n = geometry.n
    return geometry.total_length + g * (n * (n - 1) / 2) / params.k_s


def mechanical_energy(state: StringState, params: StringParams, geometry: StringGeometry,
                      hand: HandPose, gravity=GRAVITY) -> float:
    """Kinetic + spring + gravity + hinge potential energy per unit point mass."""
    pos, vel = state.positions, state.velocities
    g = np.asarray(gravity, dtype=np.float64)
    seg = np.diff(pos, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    kinetic = 0.5 * float(np.sum(vel[1:] ** 2))
    spring = 0.5 * params.k_s * float(np.sum((lengths - geometry.rest_length) ** 2))
    grav = -float(np.sum(pos[1:] @ g))
    angles = np.arctan2(seg[:, 1], seg[:, 0])
    bend = np.angle(np.exp(1j * np.diff(angles)))
    phi0 = wrap_angle(float(angles[0]) - hand.orientation)
    hinge = 0.5 * params.k_h * float(np.sum(bend ** 2)) + 0.5 * params.k_ph * phi0 ** 2
    return kinetic + spring + grav + hinge


class Rollout(Sequence):
    """Sampled string trajectory; indexes as ``(time, StringState)`` pairs."""

    def __init__(self, times, positions, velocities):
        self.times = np.asarray(times, dtype=np.float64)
        self.positions = np.asarray(positions, dtype=np.float64)
        self.velocities = np.asarray(velocities, dtype=np.float64)

    def __len__(self):
        return self.times.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Rollout(self.times[i], self.positions[i], self.velocities[i])
        t = float(self.times[i])
        return t, StringState(self.positions[i].copy(), self.velocities[i].copy(), t)

    def __iter__(self) -> Iterator:
        for i in range(len(self)):
            yield self[i]

    @property
    def tips(self) -> np.ndarray:
        return self.positions[:, -1, :]


def hand_arrays(hand_trajectory):
    """(times, xy, unwrapped orientation) arrays from a trajectory object or pose list."""
    if hasattr(hand_trajectory, "positions") and hasattr(hand_trajectory, "orientations"):
        times = np.asarray(hand_trajectory.times, dtype=np.float64)
        xy = np.asarray(hand_trajectory.positions, dtype=np.float64)
        psi = np.asarray(hand_trajectory.orientations, dtype=np.float64)
    else:
        samples = list(hand_trajectory)
        times = np.array([t for t, _ in samples], dtype=np.float64)
        xy = np.array([h.position for _, h in samples], dtype=np.float64).reshape(-1, 2)
        psi = np.array([h.orientation for _, h in samples], dtype=np.float64)
    if times.size == 0:
        raise InvalidStateError("empty hand trajectory")
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise InvalidStateError("hand trajectory must be strictly time-ordered")
    if not (np.isfinite(xy).all() and np.isfinite(psi).all()):
        raise InvalidStateError("hand trajectory contains non-finite values")
    return times, np.ascontiguousarray(xy), np.unwrap(psi)


def substeps_for(period: float, dt: float) -> int:
    s = int(round(period / dt))
    if s < 1 or abs(s * dt - period) > 1e-9 * period:
        raise InvalidStateError(f"dt={dt} does not divide the hand sampling period {period}")
    return s


def _period_of(times) -> float:
    if times.size < 2:
        return 1.0
    d = np.diff(times)
    period = float(np.mean(d))
    if np.max(np.abs(d - period)) > 1e-9 * max(period, 1e-12) + 1e-12:
        raise InvalidStateError("hand trajectory must be uniformly sampled")
    return period


def simulate_rollout(params: StringParams, geometry: StringGeometry, hand_trajectory,
                     initial: StringState, dt: float = DEFAULT_DT, gravity=GRAVITY,
                     stiffening: float = 0.0, until: float | None = None) -> Rollout:
    """Integrate at ``dt`` and return states on the hand's command grid.

    The hand pose is linearly interpolated between command samples.  ``until``
    truncates the rollout at the last command sample not after that time.
    """
    _check_state(initial, geometry)
    times, xy, psi = hand_arrays(hand_trajectory)
    period = _period_of(times)
    substeps = substeps_for(period, dt) if times.size > 1 else 1
    k = times.size
    if until is not None:
        k = int(np.searchsorted(times, until + 1e-9 * period, side="right"))
        k = max(k, 1)
    pos = initial.positions.copy()
    vel = initial.velocities.copy()
    idx = np.arange(k)
    out_pos = np.empty((k, geometry.n, 2))
    out_vel = np.empty((k, geometry.n, 2))
    status = _rollout_core(params.as_array(), float(stiffening), geometry.rest_length,
                           float(gravity[0]), float(gravity[1]), xy, psi, k, period, substeps,
                           pos, vel, idx, out_pos, out_vel)
    if status >= 0:
        t_fail = times[0] + status * period / substeps
        raise DivergenceError(f"integration diverged at step {status} (t={t_fail:.4f} s)",
                              step=status, time=t_fail)
    return Rollout(times[:k] - times[0] + initial.time, out_pos, out_vel)


def rollout_many_params(param_matrix: np.ndarray, geometry: StringGeometry, hand_trajectory,
                        initial, record_idx, dt: float = DEFAULT_DT,
                        gravity=GRAVITY, stiffening: float = 0.0):
    """Roll out many parameter sets along one hand trajectory.

    ``initial`` is one StringState shared by all candidates or one per candidate.
    Returns positions of shape (B, len(record_idx), n, 2) and a bool mask of
    candidates whose integration diverged.
    """
    times, xy, psi = hand_arrays(hand_trajectory)
    period = _period_of(times)
    substeps = substeps_for(period, dt) if times.size > 1 else 1
    record_idx = np.ascontiguousarray(record_idx, dtype=np.int64)
    if record_idx.size == 0 or record_idx[-1] >= times.size or np.any(np.diff(record_idx) <= 0):
        raise InvalidStateError("record indices must be increasing and within the trajectory")
    prms = np.ascontiguousarray(param_matrix, dtype=np.float64)
    b = prms.shape[0]
    if isinstance(initial, StringState):
        initial = [initial] * b
    pos0 = np.stack([s.positions for s in initial])
    vel0 = np.stack([s.velocities for s in initial])
    if pos0.shape != (b, geometry.n, 2):
        raise InvalidStateError("initial states do not match the candidates or geometry")
    out = np.empty((b, record_idx.size, geometry.n, 2))
    status = np.empty(b, dtype=np.int64)
    _rollout_params_batch(prms, float(stiffening), geometry.rest_length, float(gravity[0]),
                          float(gravity[1]), xy, psi, period, substeps,
                          pos0, vel0, record_idx, out, status)
    return out, status >= 0


def rollout_many_hands(params: StringParams, geometry: StringGeometry, hand_trajectories,
                       initials: Sequence[StringState], dt: float = DEFAULT_DT, gravity=GRAVITY,
                       stiffening: float = 0.0):
    """Roll out one parameter set along several hand trajectories (same period).

    Returns a list of position arrays (K_b, n, 2) and a bool divergence mask.
    """
    arrays = [hand_arrays(h) for h in hand_trajectories]
    if not arrays:
        return [], np.zeros(0, dtype=bool)
    period = _period_of(arrays[0][0])
    substeps = substeps_for(period, dt) if arrays[0][0].size > 1 else 1
    lengths = np.array([a[0].size for a in arrays], dtype=np.int64)
    kmax = int(lengths.max())
    b = len(arrays)
    xy = np.zeros((b, kmax, 2))
    psi = np.zeros((b, kmax))
    for i, (_, hxy, hpsi) in enumerate(arrays):
        xy[i, : lengths[i]] = hxy
        psi[i, : lengths[i]] = hpsi
    pos0 = np.stack([s.positions for s in initials])
    vel0 = np.stack([s.velocities for s in initials])
    out = np.zeros((b, kmax, geometry.n, 2))
    status = np.empty(b, dtype=np.int64)
    _rollout_hands_batch(params.as_array(), float(stiffening), geometry.rest_length,
                         float(gravity[0]), float(gravity[1]), xy, psi, lengths, period, substeps,
                         pos0, vel0, out, status)
    return [out[i, : lengths[i]] for i in range(b)], status >= 0
