"""JSON scenario files: parsing, defaults and line-anchored validation.

Field names carry their units (``x_m``, ``T_range_s``, ``joint_limits_rad``).
Every problem is reported as ``<file>:<line>: <message>`` where the line is
that of the offending key, or of the enclosing object when a key is missing.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .arm import ArmConfig
from .errors import CastSimError, ConfigError
from .estimation import TABLE_RANGES, EstimationBudget, ParamRange
from .matching import MatchConfig
from .observation import CameraModel
from .orchestrator import Scenario
from .plant import MISMATCH_MODES, ObstacleSpec, PlantConfig, TargetSpec
from .string_model import PARAM_NAMES, StringGeometry, StringParams

# Hidden parameter sets for the plant.  B is stiffer than A, C softer, D softest
# (D is meant for a 25-point plant).
STRING_PRESETS = {
    "A": dict(k_s=2.0e5, c_s=5.0, k_h=0.05, c_h=0.19, C_c1=0.05, C_c2=0.3, k_ph=2.0, c_ph=1.4e-4),
    "B": dict(k_s=4.0e5, c_s=10.0, k_h=0.5, c_h=0.10, C_c1=0.05, C_c2=0.3, k_ph=0.8, c_ph=0.15),
    "C": dict(k_s=1.0e5, c_s=3.0, k_h=0.02, c_h=0.19, C_c1=0.05, C_c2=0.3, k_ph=0.57, c_ph=4.5e-3),
    "D": dict(k_s=5.0e4, c_s=2.0, k_h=0.008, c_h=0.01, C_c1=0.05, C_c2=0.3, k_ph=0.05, c_ph=1.0e-3),
}

_SCHEMA = {
    "name": None,
    "seed": None,
    "target": {"x_m", "y_m", "w_m", "h_m"},
    "plant": {"string", "hidden_params", "n_points", "length_m", "mismatch_mode", "kappa"},
    "learner": {"n_points", "length_m"},
    "obstacle": {"present", "corner_m", "width_m", "height_m"},
    "arm": {"link_lengths_m", "joint_limits_rad", "joint_velocity_limits_rad_s",
            "joint_acceleration_limits_rad_s2", "composite_speed_limit_m_s", "command_period_s",
            "base_position_m"},
    "camera": {"pixels_per_meter", "image_width_px", "image_height_px", "world_origin_px",
               "stroke_thickness_px"},
    "matching": {"p_max", "delta_w", "tip_bin_px"},
    "estimation": {"samples", "chunk", "chi_0", "beta", "ranges", "reset_m_each_round"},
    "loop": {"max_iterations", "max_generation_attempts", "T_range_s", "tail_s", "sampling_period_s",
             "dt_s", "generation_batch", "perturb_fraction"},
}


class _Locator:
    """Maps JSON key paths back to source lines by scanning the raw text."""

    def __init__(self, path: str, text: str):
        self.path = path
        self.text = text

    def line_of(self, *keys) -> int:
        pos, line = 0, 1
        for key in keys:
            m = re.compile(r'"%s"\s*:' % re.escape(key)).search(self.text, pos)
            if m is None:
                break
            pos = m.end()
            line = self.text.count("\n", 0, m.start()) + 1
        return line

    def error(self, msg: str, *keys) -> ConfigError:
        return ConfigError(f"{self.path}:{self.line_of(*keys)}: {msg}")


def _num(loc, section, data, key, default=None, kind=float, positive=False, nonneg=False):
    if key not in data:
        if default is None:
            raise loc.error(f"missing required field '{section}.{key}'", section)
        return default
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise loc.error(f"'{section}.{key}' must be a number, got {v!r}", section, key)
    if kind is int and int(v) != v:
        raise loc.error(f"'{section}.{key}' must be an integer, got {v!r}", section, key)
    if positive and not v > 0:
        raise loc.error(f"'{section}.{key}' must be positive, got {v!r}", section, key)
    if nonneg and v < 0:
        raise loc.error(f"'{section}.{key}' must be >= 0, got {v!r}", section, key)
    return kind(v)


def _vec(loc, section, data, key, length, default=None):
    if key not in data:
        if default is None:
            raise loc.error(f"missing required field '{section}.{key}'", section)
        return default
    v = data[key]
    if not isinstance(v, list) or len(v) != length:
        raise loc.error(f"'{section}.{key}' must be a list of {length} values", section, key)
    return v


def _section(loc, raw, name, required=False):
    if name not in raw:
        if required:
            raise loc.error(f"missing required section '{name}'")
        return {}
    data = raw[name]
    if not isinstance(data, dict):
        raise loc.error(f"'{name}' must be an object", name)
    unknown = set(data) - _SCHEMA[name]
    if unknown:
        key = sorted(unknown)[0]
        raise loc.error(f"unknown field '{name}.{key}' (allowed: {', '.join(sorted(_SCHEMA[name]))})", name, key)
    return data


def _params(loc, plant):
    if "hidden_params" in plant and "string" in plant:
        raise loc.error("give either 'plant.string' or 'plant.hidden_params', not both", "plant", "string")
    if "string" in plant:
        name = plant["string"]
        if name not in STRING_PRESETS:
            raise loc.error(f"unknown string preset {name!r} (known: {', '.join(STRING_PRESETS)})",
                            "plant", "string")
        return StringParams(**STRING_PRESETS[name])
    if "hidden_params" not in plant:
        raise loc.error("missing 'plant.string' or 'plant.hidden_params'", "plant")
    hp = plant["hidden_params"]
    if not isinstance(hp, dict):
        raise loc.error("'plant.hidden_params' must be an object", "plant", "hidden_params")
    for k in hp:
        if k not in PARAM_NAMES:
            raise loc.error(f"unknown string parameter {k!r}", "plant", "hidden_params", k)
    for k in PARAM_NAMES:
        if k not in hp:
            raise loc.error(f"missing string parameter {k!r}", "plant", "hidden_params")
        _num(loc, "plant.hidden_params", hp, k, positive=True)
    return StringParams(**{k: float(hp[k]) for k in PARAM_NAMES})


def scenario_from_dict(raw: dict, path: str = "<scenario>", text: str = "") -> Scenario:
    loc = _Locator(path, text)
    if not isinstance(raw, dict):
        raise loc.error("scenario must be a JSON object")
    unknown = set(raw) - set(_SCHEMA)
    if unknown:
        key = sorted(unknown)[0]
        raise loc.error(f"unknown section '{key}'", key)

    tgt = _section(loc, raw, "target", required=True)
    target = TargetSpec(_num(loc, "target", tgt, "x_m"), _num(loc, "target", tgt, "y_m"),
                        _num(loc, "target", tgt, "w_m", 0.02, positive=True),
                        _num(loc, "target", tgt, "h_m", 0.04, positive=True))

    pl = _section(loc, raw, "plant", required=True)
    mode = pl.get("mismatch_mode", "none")
    if mode not in MISMATCH_MODES:
        raise loc.error(f"'plant.mismatch_mode' must be one of {MISMATCH_MODES}", "plant", "mismatch_mode")
    try:
        plant_geom = StringGeometry(_num(loc, "plant", pl, "n_points", 10, kind=int),
                                    _num(loc, "plant", pl, "length_m", 0.3, positive=True))
    except CastSimError as exc:
        raise loc.error(str(exc), "plant", "n_points") from None
    plant = PlantConfig(_params(loc, pl), plant_geom, mode,
                        _num(loc, "plant", pl, "kappa", 0.5, nonneg=True))

    ln = _section(loc, raw, "learner")
    try:
        learner = StringGeometry(_num(loc, "learner", ln, "n_points", 10, kind=int),
                                 _num(loc, "learner", ln, "length_m", 0.3, positive=True))
    except CastSimError as exc:
        raise loc.error(str(exc), "learner", "n_points") from None

    ob = _section(loc, raw, "obstacle")
    if ob:
        present = ob.get("present", True)
        if not isinstance(present, bool):
            raise loc.error("'obstacle.present' must be true or false", "obstacle", "present")
        obstacle = ObstacleSpec(tuple(_vec(loc, "obstacle", ob, "corner_m", 2)),
                                _num(loc, "obstacle", ob, "width_m", nonneg=True),
                                _num(loc, "obstacle", ob, "height_m", nonneg=True), present)
    else:
        obstacle = ObstacleSpec()

    a = _section(loc, raw, "arm")
    d = ArmConfig()
    try:
        arm = ArmConfig(
            link_lengths=_vec(loc, "arm", a, "link_lengths_m", 3, d.link_lengths),
            joint_limits=_vec(loc, "arm", a, "joint_limits_rad", 3, d.joint_limits),
            joint_velocity_limits=_vec(loc, "arm", a, "joint_velocity_limits_rad_s", 3, d.joint_velocity_limits),
            joint_acceleration_limits=_vec(loc, "arm", a, "joint_acceleration_limits_rad_s2", 3,
                                           d.joint_acceleration_limits),
            composite_speed_limit=_num(loc, "arm", a, "composite_speed_limit_m_s", d.composite_speed_limit),
            command_period=_num(loc, "arm", a, "command_period_s", d.command_period),
            base_position=_vec(loc, "arm", a, "base_position_m", 2, d.base_position))
    except (CastSimError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise loc.error(f"invalid arm settings: {exc}", "arm") from None

    c = _section(loc, raw, "camera")
    dc = CameraModel()
    try:
        camera = CameraModel(_num(loc, "camera", c, "pixels_per_meter", dc.pixels_per_meter),
                             _num(loc, "camera", c, "image_width_px", dc.image_width, kind=int),
                             _num(loc, "camera", c, "image_height_px", dc.image_height, kind=int),
                             tuple(_vec(loc, "camera", c, "world_origin_px", 2, dc.world_origin_pixel)),
                             _num(loc, "camera", c, "stroke_thickness_px", dc.stroke_thickness, kind=int))
    except CastSimError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise loc.error(f"invalid camera settings: {exc}", "camera") from None

    m = _section(loc, raw, "matching")
    try:
        match = MatchConfig(_num(loc, "matching", m, "p_max", 8, kind=int),
                            _num(loc, "matching", m, "delta_w", 0.25),
                            _num(loc, "matching", m, "tip_bin_px", 3, kind=int))
    except CastSimError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise loc.error(f"invalid matching settings: {exc}", "matching") from None

    e = _section(loc, raw, "estimation")
    bounds = dict(TABLE_RANGES)
    for k, v in e.get("ranges", {}).items():
        if k not in PARAM_NAMES:
            raise loc.error(f"unknown string parameter {k!r}", "estimation", "ranges", k)
        if not (isinstance(v, list) and len(v) == 2):
            raise loc.error(f"range for {k} must be [min, max]", "estimation", "ranges", k)
        bounds[k] = (float(v[0]), float(v[1]))
    try:
        ranges = ParamRange(bounds)
        budget = EstimationBudget(_num(loc, "estimation", e, "samples", 2000, kind=int),
                                  _num(loc, "estimation", e, "chunk", 250, kind=int))
    except CastSimError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise loc.error(str(exc), "estimation") from None
    chi_0 = _num(loc, "estimation", e, "chi_0", 0.6, positive=True)
    beta = _num(loc, "estimation", e, "beta", 0.995, positive=True)
    if not beta < 1:
        raise loc.error("'estimation.beta' must lie in (0, 1)", "estimation", "beta")
    reset_m = e.get("reset_m_each_round", False)
    if not isinstance(reset_m, bool):
        raise loc.error("'estimation.reset_m_each_round' must be true or false", "estimation", "reset_m_each_round")

    lp = _section(loc, raw, "loop")
    max_it = lp.get("max_iterations", 10)
    if isinstance(max_it, bool) or not isinstance(max_it, int) or max_it < 1:
        raise loc.error(f"'loop.max_iterations' must be an integer >= 1, got {max_it!r}",
                        "loop", "max_iterations")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise loc.error(f"'seed' must be a non-negative integer, got {seed!r}", "seed")
    name = raw.get("name", Path(path).stem)
    if not isinstance(name, str):
        raise loc.error("'name' must be a string", "name")

    try:
        return Scenario(
            plant=plant, target=target, arm=arm, learner_geometry=learner, obstacle=obstacle,
            camera=camera, match=match, ranges=ranges, budget=budget, max_iterations=max_it,
            max_generation_attempts=_num(loc, "loop", lp, "max_generation_attempts", 50000, kind=int),
            T_range=tuple(_vec(loc, "loop", lp, "T_range_s", 2, (0.2, 1.5))),
            seed=seed, tail=_num(loc, "loop", lp, "tail_s", 0.4, nonneg=True),
            sampling_period=_num(loc, "loop", lp, "sampling_period_s", 0.04, positive=True),
            dt=_num(loc, "loop", lp, "dt_s", 5e-5, positive=True),
            generation_batch=_num(loc, "loop", lp, "generation_batch", 16, kind=int),
            perturb_fraction=_num(loc, "loop", lp, "perturb_fraction", 0.25, nonneg=True),
            chi_0=chi_0, beta=beta, reset_m_each_round=reset_m, name=name)
    except ConfigError as exc:
        raise loc.error(str(exc), "loop") from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read scenario: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg} (column {exc.colno})") from None
    return scenario_from_dict(raw, str(path), text)
