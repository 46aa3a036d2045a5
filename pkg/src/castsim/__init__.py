"""Planar string casting with a 3-link arm: simulate, observe, estimate, retry."""

import os

# numba's TBB layer is absent on many installs and warns on first parallel call
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .arm import (ArmConfig, HandTrajectory, MotionPlan, bezier_displacement, bezier_velocity,  # noqa: E402
                  check_limits, forward_kinematics, generate_motion, limit_violations, perturb_motion,
                  realize_trajectory)
from .errors import (AlignmentError, CastSimError, ConfigError, DivergenceError, EstimationFailed,  # noqa: E402
                     FrameOutOfView, GenerationFailed, InvalidStateError, LimitViolation, TipNotFound)
from .estimation import (EstimationBudget, ParamRange, SearchState, estimate, exponent_to_value,  # noqa: E402
                         sample_candidate, sample_exponent, value_to_exponent)
from .matching import MatchConfig, MatchReport, ObservationScorer, frame_score, matching_rate  # noqa: E402
from .observation import (BinaryFrame, CameraModel, FrameSeries, ScoreField, build_score_field,  # noqa: E402
                          capture_series, locate_tip, rasterize, read_frames, write_frames)
from .orchestrator import Scenario, TrialLog, generate_until_simulated_success, run_trial  # noqa: E402
from .plant import (ObstacleSpec, PlantConfig, TargetSpec, check_collision, check_success,  # noqa: E402
                    execute_manipulation)
from .string_model import (HandPose, StringGeometry, StringParams, StringState, euler_step,  # noqa: E402
                           init_hanging_state, net_accelerations, simulate_rollout)


def _apply_thread_count():
    n = os.environ.get("CASTSIM_THREADS")
    if n:
        import numba
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


_apply_thread_count()

__version__ = "0.1.0"
