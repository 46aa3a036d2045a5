"""Command line: run a trial, estimate from dumped frames, simulate one plan, validate a scenario."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from .arm import ArmConfig, HandTrajectory, MotionPlan, realize_trajectory
from .errors import CastSimError, ConfigError
from .estimation import EstimationBudget, ParamRange, SearchState, estimate
from .matching import MatchConfig
from .observation import CameraModel, nearest_indices, read_frames, write_frames
from .overlay import write_frame_svg, write_montage_svg
from .orchestrator import run_trial
from .scenario import load_scenario
from .string_model import PARAM_NAMES, StringGeometry, StringParams, init_hanging_state, simulate_rollout

log = logging.getLogger("castsim")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=False) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def write_tip_csv(path, times, points) -> None:
    _write_csv(Path(path), ["t_s", "x_m", "y_m"], zip(times, points[:, 0], points[:, 1]))


def write_hand_csv(path, hand: HandTrajectory) -> None:
    rows = zip(hand.times, hand.positions[:, 0], hand.positions[:, 1], hand.orientations,
               hand.velocities[:, 0], hand.velocities[:, 1], hand.angular_velocities)
    _write_csv(Path(path), ["t_s", "x_m", "y_m", "theta_rad", "vx_m_s", "vy_m_s", "omega_rad_s"], rows)


def read_hand_csv(path) -> HandTrajectory:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read trajectory: {exc.strerror}") from None
    if not rows:
        raise ConfigError(f"{path}:1: empty trajectory file")
    header = [h.strip() for h in rows[0]]
    need = ["t_s", "x_m", "y_m", "theta_rad"]
    missing = [h for h in need if h not in header]
    if missing:
        raise ConfigError(f"{path}:1: missing column(s) {', '.join(missing)}")
    data = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != len(header):
            raise ConfigError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: non-numeric field") from None
    if not data:
        raise ConfigError(f"{path}:2: trajectory has no samples")
    a = np.array(data)
    col = {h: a[:, i] for i, h in enumerate(header)}
    vel = np.column_stack([col["vx_m_s"], col["vy_m_s"]]) if "vx_m_s" in col and "vy_m_s" in col else None
    return HandTrajectory(col["t_s"], np.column_stack([col["x_m"], col["y_m"]]), col["theta_rad"],
                          vel, col.get("omega_rad_s"))


def _iteration_outputs(it_dir: Path, rec, scenario) -> None:
    manip = rec.manipulation
    it_dir.mkdir(parents=True, exist_ok=True)
    write_frames(manip.frames, it_dir / "frames")
    write_tip_csv(it_dir / "tip.csv", manip.tip_trajectory.times, manip.tip_trajectory.points)
    write_hand_csv(it_dir / "hand.csv", manip.hand_trajectory)
    idx = nearest_indices(manip.frames.timestamps, manip.hand_trajectory.times, 0.5 * scenario.arm.command_period)
    geom = scenario.learner_geometry
    try:
        sim = simulate_rollout(rec.params_used, geom, manip.hand_trajectory,
                               init_hanging_state(manip.hand_trajectory[0][1], geom, rec.params_used),
                               dt=scenario.dt)
        sim_pos = sim.positions[idx]
    except CastSimError:
        sim_pos = None
    svg_dir = it_dir / "overlay"
    svg_dir.mkdir(exist_ok=True)
    for k, frame in enumerate(manip.frames):
        write_frame_svg(svg_dir / f"frame_{k:04d}.svg", frame, None if sim_pos is None else sim_pos[k],
                        scenario.camera, scenario.target, scenario.obstacle)
    write_montage_svg(it_dir / "montage.svg", manip.frames.frames, sim_pos, scenario.camera, scenario.target,
                      scenario.obstacle, title=f"iteration {rec.iteration}:")


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    if args.max_iterations is not None:
        scenario.max_iterations = args.max_iterations
    if args.samples is not None:
        scenario.budget = type(scenario.budget)(args.samples, scenario.budget.chunk)
    scenario.validate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    trial = run_trial(scenario, keep_manipulations=True)
    _dump_json(out / "trial.json", trial.to_dict())

    last = None
    for rec in trial.iterations:
        if rec.manipulation is None:
            continue
        _iteration_outputs(out / "iterations" / f"iter_{rec.iteration:02d}", rec, scenario)
        last = rec
    if last is not None:
        m = last.manipulation
        write_frames(m.frames, out / "frames")
        write_tip_csv(out / "tip.csv", m.tip_trajectory.times, m.tip_trajectory.points)
        write_hand_csv(out / "hand.csv", m.hand_trajectory)
        (out / "montage.svg").write_text(
            (out / "iterations" / f"iter_{last.iteration:02d}" / "montage.svg").read_text())
    _dump_json(out / "run_info.json", {
        "scenario_file": str(args.scenario),
        "seed": scenario.seed,
        "wall_clock_s": trial.wall_clock,
        "finished_unix_s": time.time(),
        "elapsed_s": time.time() - started,
        "python": platform.python_version(),
        "numpy": np.__version__,
    })
    status = "success" if trial.success else "failure"
    print(f"{scenario.name}: {status} after {trial.iterations_used} iteration(s); output in {out}")
    return EXIT_OK if trial.success else EXIT_FAILED


def _load_params(path) -> StringParams:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read parameters: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if isinstance(raw, dict) and "params" in raw:
        raw = raw["params"]
    if not isinstance(raw, dict) or sorted(raw) != sorted(PARAM_NAMES):
        raise ConfigError(f"{path}:1: expected an object with keys {', '.join(PARAM_NAMES)}")
    try:
        return StringParams(**{k: float(raw[k]) for k in PARAM_NAMES})
    except (CastSimError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}:1: {exc}") from None


def _load_plan(path) -> MotionPlan:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read plan: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if isinstance(raw, dict) and "plan" in raw:
        raw = raw["plan"]
    try:
        return MotionPlan.from_dict(raw)
    except (KeyError, TypeError, ValueError, CastSimError) as exc:
        raise ConfigError(f"{path}:1: malformed plan: {exc}") from None


def cmd_simulate(args) -> int:
    params = _load_params(args.params)
    plan = _load_plan(args.plan)
    if args.scenario:
        sc = load_scenario(args.scenario)
        arm, geom, dt = sc.arm, sc.learner_geometry, sc.dt
    else:
        arm, geom, dt = ArmConfig(), StringGeometry(args.n_points, args.length), 5e-5
    hand = realize_trajectory(plan, arm, args.tail)
    roll = simulate_rollout(params, geom, hand, init_hanging_state(hand[0][1], geom, params), dt=dt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tip_csv(out / "tip.csv", roll.times, roll.tips)
    write_hand_csv(out / "hand.csv", hand)
    k, n = roll.positions.shape[:2]
    rows = ((roll.times[i], j, *roll.positions[i, j]) for i in range(k) for j in range(n))
    with open(out / "string.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "point", "x_m", "y_m"])
        for t, j, x, y in rows:
            w.writerow([repr(float(t)), j, repr(float(x)), repr(float(y))])
    print(f"simulated {k} samples of a {n}-point string; output in {out}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    frames = read_frames(args.frames)
    hand = read_hand_csv(args.trajectory)
    sc = load_scenario(args.scenario) if args.scenario else None
    geom = sc.learner_geometry if sc else StringGeometry(args.n_points, args.length)
    ranges = sc.ranges if sc else ParamRange()
    camera = sc.camera if sc else CameraModel()
    match = sc.match if sc else MatchConfig()
    samples = args.samples if args.samples is not None else (sc.budget.samples if sc else 2000)
    state = (SearchState(chi_0=sc.chi_0, beta=sc.beta, reset_m_each_round=sc.reset_m_each_round)
             if sc else SearchState())
    if args.state:
        state = SearchState.from_dict(json.loads(Path(args.state).read_text()))
    rng = np.random.default_rng(args.seed)
    result = estimate(frames, hand, geom, state, ranges, EstimationBudget(samples), camera, match, rng,
                      dt=sc.dt if sc else 5e-5)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "estimate.json", {"params": result.params.to_dict(), "report": result.report.to_dict(),
                                       "state": result.state.to_dict(), "candidates": result.candidates,
                                       "diverged": result.diverged})
    print(f"best E = {result.report.E:.4f} over {result.candidates} candidates; output in {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    print(f"{args.scenario}: ok ({sc.name}, target ({sc.target.x_ref}, {sc.target.y_ref}) m, "
          f"plant n={sc.plant.plant_geometry.n}, mismatch {sc.plant.mismatch_mode})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="castsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a closed-loop casting trial")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default="out")
    r.add_argument("--max-iterations", type=int)
    r.add_argument("--samples", type=int, help="candidates per estimation round")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("estimate", help="one estimation round from dumped frames")
    e.add_argument("frames", help="directory with frame_NNNN.pgm and frames.idx")
    e.add_argument("trajectory", help="hand trajectory CSV (t_s, x_m, y_m, theta_rad, ...)")
    e.add_argument("--scenario")
    e.add_argument("--state", help="search state JSON from a previous round")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--samples", type=int)
    e.add_argument("--n-points", type=int, default=10)
    e.add_argument("--length", type=float, default=0.3)
    e.add_argument("--out", default="out")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="roll out one plan with given string parameters")
    s.add_argument("params", help="JSON object with the eight string parameters")
    s.add_argument("plan", help="motion plan JSON")
    s.add_argument("--scenario")
    s.add_argument("--n-points", type=int, default=10)
    s.add_argument("--length", type=float, default=0.3)
    s.add_argument("--tail", type=float, default=0.4)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CastSimError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
