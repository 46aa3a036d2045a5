"""Random search for string parameters in log-scaled exponent space.

Each parameter is drawn as ``P_min * (P_max / P_min) ** chi`` with ``chi``
scattered around the previous best exponent.  The scatter half-width is
``chi_0 / M * beta ** m`` where M counts manipulations and m counts parameter
draws, so the search narrows both within and across rounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EstimationFailed, InvalidStateError
from .matching import MatchConfig, MatchReport, ObservationScorer
from .observation import CameraModel, FrameSeries
from .string_model import (DEFAULT_DT, GRAVITY, PARAM_NAMES, StringGeometry, StringParams,
                           hand_arrays, init_hanging_state, rollout_many_params)

log = logging.getLogger(__name__)

TABLE_RANGES = {
    "k_s": (9.0e3, 9.0e5),
    "c_s": (0.13, 1.3e3),
    "k_h": (8.0e-3, 4.0e2),
    "c_h": (3.0e-7, 0.67),
    "C_c1": (1.0e-4, 10.0),
    "C_c2": (1.0e-4, 10.0),
    "k_ph": (1.0e-3, 5.0),
    "c_ph": (1.1e-6, 0.37),
}


@dataclass(frozen=True)
class ParamRange:
    bounds: dict = field(default_factory=lambda: dict(TABLE_RANGES))

    def __post_init__(self):
        for name in PARAM_NAMES:
            if name not in self.bounds:
                raise InvalidStateError(f"missing range for {name}")
            lo, hi = self.bounds[name]
            if not (0 < lo < hi):
                raise InvalidStateError(f"range for {name} must satisfy 0 < min < max, got {(lo, hi)}")

    @property
    def lows(self) -> np.ndarray:
        return np.array([self.bounds[k][0] for k in PARAM_NAMES], dtype=np.float64)

    @property
    def highs(self) -> np.ndarray:
        return np.array([self.bounds[k][1] for k in PARAM_NAMES], dtype=np.float64)

    def values(self, chi) -> np.ndarray:
        return exponent_to_value(np.asarray(chi, dtype=np.float64), (self.lows, self.highs))

    def params(self, chi) -> StringParams:
        return StringParams.from_array(self.values(chi))

    def exponents(self, params: StringParams) -> np.ndarray:
        return value_to_exponent(params.as_array(), (self.lows, self.highs))

    def contains(self, params: StringParams) -> bool:
        v = params.as_array()
        return bool(np.all(v >= self.lows) and np.all(v <= self.highs))


@dataclass
class SearchState:
    chi_best: np.ndarray = field(default_factory=lambda: np.zeros(len(PARAM_NAMES)))
    m: int = 0
    M: int = 1
    chi_0: float = 0.6
    beta: float = 0.995
    best_E: float = 0.0
    # m is cumulative across rounds by default; True restarts it every round
    reset_m_each_round: bool = False

    def __post_init__(self):
        self.chi_best = np.array(self.chi_best, dtype=np.float64).reshape(len(PARAM_NAMES))
        if np.any(self.chi_best < 0) or np.any(self.chi_best > 1):
            raise InvalidStateError("chi_best components must lie in [0, 1]")
        if not 0 < self.beta < 1:
            raise InvalidStateError("beta must lie in (0, 1)")
        if self.M < 1:
            raise InvalidStateError("M must be >= 1")

    @property
    def half_width(self) -> float:
        return self.chi_0 / self.M * self.beta ** self.m

    def copy(self) -> "SearchState":
        return replace(self, chi_best=self.chi_best.copy())

    def to_dict(self) -> dict:
        return {"chi_best": [float(v) for v in self.chi_best], "m": self.m, "M": self.M,
                "chi_0": self.chi_0, "beta": self.beta, "best_E": self.best_E,
                "reset_m_each_round": self.reset_m_each_round}

    @classmethod
    def from_dict(cls, data: dict) -> "SearchState":
        return cls(**data)


@dataclass(frozen=True)
class EstimationBudget:
    samples: int = 2000
    chunk: int = 250

    def __post_init__(self):
        if self.samples < 1 or self.chunk < 1:
            raise InvalidStateError("budget samples and chunk must be >= 1")


def sample_exponent(chi_best, chi_0, M, beta, m, rng):
    """chi_best + (chi_0 / M) * beta**m * U(-1, 1), clamped to [0, 1].

    Works elementwise when ``chi_best`` is an array.
    """
    if M < 1:
        raise InvalidStateError("M must be >= 1")
    chi_best = np.asarray(chi_best, dtype=np.float64)
    draw = rng.uniform(-1.0, 1.0, size=chi_best.shape)
    chi = np.clip(chi_best + (chi_0 / M) * beta ** m * draw, 0.0, 1.0)
    return float(chi) if chi.ndim == 0 else chi


def exponent_to_value(chi, bounds):
    lo, hi = bounds
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    chi = np.asarray(chi, dtype=np.float64)
    val = lo * (hi / lo) ** chi
    # pin the endpoints exactly against rounding in the power
    val = np.where(chi <= 0.0, lo, np.where(chi >= 1.0, hi, val))
    return float(val) if val.ndim == 0 else val


def value_to_exponent(value, bounds):
    lo, hi = bounds
    chi = np.log(np.asarray(value, dtype=np.float64) / lo) / np.log(np.asarray(hi) / lo)
    return float(chi) if np.ndim(chi) == 0 else chi


def sample_candidate_exponents(state: SearchState, rng) -> np.ndarray:
    """Draw one exponent vector and advance ``state.m``."""
    chi = sample_exponent(state.chi_best, state.chi_0, state.M, state.beta, state.m, rng)
    state.m += 1
    return chi


def sample_candidate(state: SearchState, ranges: ParamRange, rng) -> StringParams:
    """One candidate parameter set; increments ``state.m`` in place."""
    return ranges.params(sample_candidate_exponents(state, rng))


@dataclass
class EstimationResult:
    params: StringParams
    report: MatchReport
    state: SearchState
    candidates: int
    diverged: int

    def __iter__(self):
        # unpacks as (params, report, state)
        return iter((self.params, self.report, self.state))


def estimate(observed: FrameSeries, hand_trajectory, geometry: StringGeometry, state: SearchState,
             ranges: ParamRange, budget: EstimationBudget, camera: CameraModel,
             match_config: MatchConfig, rng, dt: float = DEFAULT_DT, gravity=GRAVITY,
             initial_pose=None) -> EstimationResult:
    """One estimation round against a single observed manipulation.

    Candidate 0 is always the incumbent ``chi_best``.  All draws happen before
    any rollout, and ties go to the lowest candidate index.
    """
    scorer = ObservationScorer(observed, camera, match_config)
    times, _, _ = hand_arrays(hand_trajectory)
    period = float(times[1] - times[0]) if times.size > 1 else 0.0
    record_idx = scorer.align(times, period)
    if np.any(np.diff(record_idx) <= 0):
        raise InvalidStateError("observed frames are denser than the hand command grid")

    work = state.copy()
    if work.reset_m_each_round:
        work.m = 0
    chis = [work.chi_best.copy()]
    for _ in range(budget.samples - 1):
        chis.append(sample_candidate_exponents(work, rng))
    chis = np.array(chis)
    values = ranges.values(chis)

    grasp = hand_trajectory[0][1] if initial_pose is None else initial_pose
    E = np.full(len(chis), -np.inf)
    per_frame = np.zeros((len(chis), len(scorer)))
    for start in range(0, len(chis), budget.chunk):
        stop = min(start + budget.chunk, len(chis))
        inits = [init_hanging_state(grasp, geometry, StringParams.from_array(v)) for v in values[start:stop]]
        pos, bad = rollout_many_params(values[start:stop], geometry, hand_trajectory, inits,
                                       record_idx, dt=dt, gravity=gravity)
        ok = ~bad
        if ok.any():
            pf = scorer.score(pos[ok])
            per_frame[start:stop][ok] = pf
            E[start:stop][ok] = pf.mean(axis=1)
        log.debug("estimation chunk %d-%d: best so far %.4f", start, stop, np.max(E[:stop]))

    n_bad = int(np.sum(~np.isfinite(E)))
    if n_bad == len(E):
        raise EstimationFailed("every candidate diverged; check parameter ranges against dt")
    win = int(np.argmax(E))
    new_state = work.copy()
    new_state.chi_best = chis[win].copy()
    new_state.best_E = float(E[win])
    new_state.M = work.M + 1
    report = MatchReport(float(E[win]), [float(v) for v in per_frame[win]], len(scorer))
    return EstimationResult(StringParams.from_array(values[win]), report, new_state, len(chis), n_bad)
