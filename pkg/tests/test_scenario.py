import json
from pathlib import Path

import pytest

from castsim.cli import main
from castsim.errors import ConfigError
from castsim.scenario import STRING_PRESETS, load_scenario

SCENARIOS = sorted((Path(__file__).parent.parent / "scenarios").glob("*.json"))

BASE = {
    "name": "t",
    "seed": 3,
    "target": {"x_m": 0.3, "y_m": 0.9},
    "plant": {"string": "A"},
}


def _write(tmp_path, text):
    p = tmp_path / "s.json"
    p.write_text(text)
    return p


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    sc = load_scenario(path)
    assert sc.max_iterations >= 10
    assert sc.plant.hidden_params is not None


def test_presets_lie_inside_default_ranges():
    from castsim.estimation import ParamRange
    from castsim.string_model import StringParams
    for name, values in STRING_PRESETS.items():
        assert ParamRange().contains(StringParams(**values)), name


def test_defaults(tmp_path):
    sc = load_scenario(_write(tmp_path, json.dumps(BASE)))
    assert sc.seed == 3 and sc.max_iterations == 10
    assert (sc.target.w, sc.target.h) == (0.02, 0.04)
    assert sc.budget.samples == 2000
    assert sc.reset_m_each_round is False
    assert not sc.obstacle.present


def test_missing_target_names_line(tmp_path, capsys):
    raw = dict(BASE)
    del raw["target"]
    p = _write(tmp_path, json.dumps(raw, indent=2))
    with pytest.raises(ConfigError, match="target"):
        load_scenario(p)
    assert main(["validate", str(p)]) == 2
    assert "target" in capsys.readouterr().err


def test_unknown_key_reports_its_line(tmp_path):
    raw = json.loads(json.dumps(BASE))
    raw["plant"]["colour"] = "red"
    text = json.dumps(raw, indent=2)
    line = next(i for i, l in enumerate(text.splitlines(), 1) if "colour" in l)
    with pytest.raises(ConfigError, match=rf"s\.json:{line}:.*plant\.colour"):
        load_scenario(_write(tmp_path, text))


def test_bad_json_reports_line(tmp_path):
    with pytest.raises(ConfigError, match=r"s\.json:3:"):
        load_scenario(_write(tmp_path, '{\n  "seed": 1,\n  "target": ,\n}'))


@pytest.mark.parametrize("section,key,value", [
    ("loop", "max_iterations", 0),
    ("target", "w_m", -1.0),
    ("plant", "mismatch_mode", "wobbly"),
    ("plant", "string", "Z"),
    ("estimation", "beta", 1.5),
    ("estimation", "reset_m_each_round", "yes"),
])
def test_invalid_values_rejected(tmp_path, section, key, value):
    raw = json.loads(json.dumps(BASE))
    raw.setdefault(section, {})[key] = value
    with pytest.raises(ConfigError, match=r"s\.json:\d+:"):
        load_scenario(_write(tmp_path, json.dumps(raw, indent=2)))


def test_missing_file():
    with pytest.raises(ConfigError):
        load_scenario("/nonexistent/scenario.json")
