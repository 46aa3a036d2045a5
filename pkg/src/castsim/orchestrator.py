"""Closed loop: generate a motion in simulation, run it on the plant, re-estimate."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .arm import T_RANGE, ArmConfig, HandTrajectory, MotionPlan, generate_motion, perturb_motion, realize_trajectory
from .errors import CastSimError, ConfigError, GenerationFailed, LimitViolation
from .estimation import EstimationBudget, ParamRange, SearchState, estimate
from .matching import MatchConfig, MatchReport, ObservationScorer, matching_rate
from .observation import CameraModel, FrameSeries
from .plant import (Manipulation, ObstacleSpec, PlantConfig, TargetSpec, check_collision, check_success,
                    execute_manipulation)
from .string_model import (DEFAULT_DT, GRAVITY, StringGeometry, StringParams, init_hanging_state,
                           rollout_many_hands, simulate_rollout)

log = logging.getLogger(__name__)


@dataclass
class Scenario:
    plant: PlantConfig
    target: TargetSpec
    arm: ArmConfig = field(default_factory=ArmConfig)
    learner_geometry: StringGeometry = field(default_factory=StringGeometry)
    obstacle: ObstacleSpec = field(default_factory=ObstacleSpec)
    camera: CameraModel = field(default_factory=CameraModel)
    match: MatchConfig = field(default_factory=MatchConfig)
    ranges: ParamRange = field(default_factory=ParamRange)
    budget: EstimationBudget = field(default_factory=EstimationBudget)
    max_iterations: int = 10
    max_generation_attempts: int = 50000
    T_range: tuple = T_RANGE
    seed: int = 0
    tail: float = 0.4
    sampling_period: float = 0.04
    dt: float = DEFAULT_DT
    generation_batch: int = 16
    perturb_fraction: float = 0.25
    chi_0: float = 0.6
    beta: float = 0.995
    reset_m_each_round: bool = False
    name: str = "scenario"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ConfigError("max_iterations must be an integer >= 1")
        if self.max_generation_attempts < 1:
            raise ConfigError("max_generation_attempts must be >= 1")
        lo, hi = self.T_range
        if not 0 < lo <= hi:
            raise ConfigError("T_range must satisfy 0 < min <= max")
        if self.tail < 0 or self.sampling_period <= 0 or self.dt <= 0:
            raise ConfigError("tail must be >= 0; sampling_period and dt must be positive")
        if self.sampling_period < self.arm.command_period:
            raise ConfigError("sampling_period must not be shorter than the command period")
        if self.generation_batch < 1:
            raise ConfigError("generation_batch must be >= 1")
        ratio = self.arm.command_period / self.dt
        if abs(ratio - round(ratio)) > 1e-6:
            raise ConfigError("dt must divide the command period evenly")


@dataclass
class GenerationResult:
    plan: MotionPlan
    hand: HandTrajectory
    success_time: float
    tip_path: np.ndarray
    attempts: int
    rollouts: int


@dataclass
class IterationRecord:
    iteration: int
    params_used: StringParams
    plan: Optional[MotionPlan] = None
    generation_attempts: int = 0
    simulated_success_time: Optional[float] = None
    predicted_tip_path: Optional[np.ndarray] = None
    frames_ref: Optional[str] = None
    real_success_time: Optional[float] = None
    collision_time: Optional[float] = None
    match_current: Optional[MatchReport] = None
    estimated_params: Optional[StringParams] = None
    post_estimation_E: Optional[float] = None
    error: Optional[str] = None
    manipulation: Optional[Manipulation] = field(default=None, repr=False)

    @property
    def succeeded(self) -> bool:
        return self.real_success_time is not None and self.collision_time is None

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else [[float(x) for x in row] for row in a]
        return {
            "iteration": self.iteration,
            "params_used": self.params_used.to_dict(),
            "plan": None if self.plan is None else self.plan.to_dict(),
            "generation_attempts": self.generation_attempts,
            "simulated_success_time_s": self.simulated_success_time,
            "predicted_tip_path_m": arr(self.predicted_tip_path),
            "frames_ref": self.frames_ref,
            "real_success_time_s": self.real_success_time,
            "collision_time_s": self.collision_time,
            "match_current": None if self.match_current is None else self.match_current.to_dict(),
            "estimated_params": None if self.estimated_params is None else self.estimated_params.to_dict(),
            "post_estimation_E": self.post_estimation_E,
            "error": self.error,
        }


@dataclass
class TrialLog:
    seed: int
    iterations: List[IterationRecord] = field(default_factory=list)
    success: bool = False
    wall_clock: float = 0.0
    scenario_name: str = ""

    @property
    def iterations_used(self) -> int:
        return len(self.iterations)

    def to_dict(self) -> dict:
        # wall-clock stays out so identical runs serialize identically
        return {
            "scenario": self.scenario_name,
            "seed": self.seed,
            "success": self.success,
            "iterations_used": self.iterations_used,
            "iterations": [r.to_dict() for r in self.iterations],
        }


def _draw_plan(rng, scenario: Scenario, prev_plan: Optional[MotionPlan], iteration: int) -> MotionPlan:
    if prev_plan is None:
        return generate_motion(rng, scenario.arm, scenario.T_range)
    return perturb_motion(prev_plan, rng, max(iteration, 2), scenario.arm, scenario.T_range,
                          fraction=scenario.perturb_fraction)


def generate_until_simulated_success(params: StringParams, scenario: Scenario, rng,
                                     prev_plan: Optional[MotionPlan] = None,
                                     iteration: int = 1) -> GenerationResult:
    """Draw plans until the learner's simulated tip reaches the target box.

    Valid plans are simulated in batches of ``scenario.generation_batch``; the
    first passing plan in draw order wins, so results do not depend on how the
    batch is evaluated.
    """
    attempts = 0
    rollouts = 0
    geom = scenario.learner_geometry
    while attempts < scenario.max_generation_attempts:
        batch = []
        while len(batch) < scenario.generation_batch and attempts < scenario.max_generation_attempts:
            attempts += 1
            plan = _draw_plan(rng, scenario, prev_plan, iteration)
            try:
                hand = realize_trajectory(plan, scenario.arm, scenario.tail)
            except LimitViolation:
                continue
            batch.append((attempts, plan, hand))
        if not batch:
            break
        hands = [h for _, _, h in batch]
        inits = [init_hanging_state(h[0][1], geom, params) for h in hands]
        outs, bad = rollout_many_hands(params, geom, hands, inits, dt=scenario.dt)
        rollouts += len(batch)
        for (n_try, plan, hand), pos, diverged in zip(batch, outs, bad):
            if diverged:
                continue
            t_hit = check_success((hand.times, pos[:, -1, :]), scenario.target)
            if t_hit is None:
                continue
            if scenario.obstacle.present and check_collision(pos, hand, scenario.obstacle, scenario.arm,
                                                             until=t_hit) is not None:
                continue
            return GenerationResult(plan, hand, t_hit, pos[:, -1, :].copy(), n_try, rollouts)
    raise GenerationFailed(f"no simulated success after {attempts} attempts ({rollouts} rollouts)")


def run_trial(scenario: Scenario, keep_manipulations: bool = False) -> TrialLog:
    scenario.validate()
    started = time.perf_counter()
    gen_seq, est_seq = np.random.SeedSequence(scenario.seed).spawn(2)
    gen_rng = np.random.default_rng(gen_seq)
    est_rng = np.random.default_rng(est_seq)

    search = SearchState(chi_0=scenario.chi_0, beta=scenario.beta,
                         reset_m_each_round=scenario.reset_m_each_round)
    params = scenario.ranges.params(search.chi_best)
    trial = TrialLog(seed=scenario.seed, scenario_name=scenario.name)
    prev_plan = None

    for it in range(1, scenario.max_iterations + 1):
        rec = IterationRecord(iteration=it, params_used=params)
        trial.iterations.append(rec)
        try:
            gen = generate_until_simulated_success(params, scenario, gen_rng, prev_plan, it)
        except GenerationFailed as exc:
            rec.error = f"generation failed: {exc}"
            log.info("iteration %d: %s", it, rec.error)
            continue
        rec.plan = gen.plan
        rec.generation_attempts = gen.attempts
        rec.simulated_success_time = gen.success_time
        rec.predicted_tip_path = gen.tip_path
        prev_plan = gen.plan

        try:
            manip = execute_manipulation(gen.plan, scenario.plant, scenario.arm, scenario.camera,
                                         scenario.tail, scenario.sampling_period, scenario.dt)
        except CastSimError as exc:
            rec.error = f"manipulation failed: {exc}"
            log.info("iteration %d: %s", it, rec.error)
            continue
        if keep_manipulations:
            rec.manipulation = manip
        rec.frames_ref = f"iterations/iter_{it:02d}/frames"
        rec.real_success_time = check_success(manip.tip_trajectory, scenario.target)
        if scenario.obstacle.present:
            rec.collision_time = check_collision(manip.string_positions, manip.hand_trajectory,
                                                 scenario.obstacle, scenario.arm,
                                                 until=rec.real_success_time)

        scorer = ObservationScorer(manip.frames, scenario.camera, scenario.match)
        try:
            init = init_hanging_state(manip.hand_trajectory[0][1], scenario.learner_geometry, params)
            sim = simulate_rollout(params, scenario.learner_geometry, manip.hand_trajectory, init,
                                   dt=scenario.dt)
            rec.match_current = matching_rate(sim, manip.frames, scenario.camera, scenario.match, scorer)
        except CastSimError as exc:
            log.info("iteration %d: current-parameter rollout failed: %s", it, exc)

        log.info("iteration %d: sim hit %.3f s, real hit %s, collision %s, E(current) %s", it,
                 gen.success_time, rec.real_success_time, rec.collision_time,
                 None if rec.match_current is None else round(rec.match_current.E, 4))
        if rec.succeeded:
            trial.success = True
            break

        observed = manip.frames
        if rec.collision_time is not None:
            # contact aborts the real manipulation, so later frames never exist
            kept = [f for f in manip.frames if f.timestamp <= rec.collision_time]
            if not kept:
                rec.error = "collision before the first frame; nothing to estimate from"
                continue
            observed = FrameSeries(kept, manip.frames.sampling_period)
        try:
            result = estimate(observed, manip.hand_trajectory, scenario.learner_geometry, search,
                              scenario.ranges, scenario.budget, scenario.camera, scenario.match,
                              est_rng, dt=scenario.dt)
        except CastSimError as exc:
            rec.error = f"estimation failed: {exc}"
            log.info("iteration %d: %s", it, rec.error)
            continue
        params, search = result.params, result.state
        rec.estimated_params = params
        rec.post_estimation_E = result.report.E
        log.info("iteration %d: estimated E %.4f", it, result.report.E)

    trial.wall_clock = time.perf_counter() - started
    return trial
