import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from castsim.arm import ArmConfig, MotionPlan
from castsim.errors import EstimationFailed, InvalidStateError
from castsim.estimation import (TABLE_RANGES, EstimationBudget, ParamRange, SearchState, estimate,
                                exponent_to_value, sample_candidate, sample_exponent, value_to_exponent)
from castsim.matching import MatchConfig
from castsim.observation import CameraModel
from castsim.plant import PlantConfig, execute_manipulation
from castsim.string_model import PARAM_NAMES, StringGeometry

from conftest import midrange_params


class FixedDraw:
    """Stand-in generator whose uniform draws are a fixed value."""

    def __init__(self, value):
        self.value = value

    def uniform(self, lo, hi, size=None):
        return np.full(size if size is not None else (), self.value, dtype=np.float64)


def test_sample_exponent_examples():
    assert sample_exponent(0.37, 0.6, 1, 0.995, 0, FixedDraw(0.0)) == 0.37
    assert sample_exponent(0.0, 0.6, 1, 0.995, 0, FixedDraw(-1.0)) == 0.0
    assert sample_exponent(0.5, 0.6, 1, 0.995, 0, FixedDraw(1.0)) == 1.0
    assert sample_exponent(0.5, 0.6, 2, 0.995, 0, FixedDraw(-1.0)) == pytest.approx(0.2)
    with pytest.raises(InvalidStateError):
        sample_exponent(0.5, 0.6, 0, 0.995, 0, FixedDraw(0.0))


def test_sample_exponent_envelope(rng):
    bound = 0.6 / 2 * 0.995 ** 100
    assert bound == pytest.approx(0.1818, abs=1e-4)
    chi = sample_exponent(np.full(10_000, 0.5), 0.6, 2, 0.995, 100, rng)
    assert np.all(np.abs(chi - 0.5) <= bound)
    # the envelope is actually used, not just respected
    assert np.max(np.abs(chi - 0.5)) > 0.99 * bound


def test_exponent_to_value_examples():
    for name in PARAM_NAMES:
        lo, hi = TABLE_RANGES[name]
        assert exponent_to_value(0.0, (lo, hi)) == lo
        assert exponent_to_value(1.0, (lo, hi)) == hi
    assert exponent_to_value(0.5, (9.0e3, 9.0e5)) == pytest.approx(9.0e4, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(chi=st.floats(0.0, 1.0), idx=st.integers(0, len(PARAM_NAMES) - 1))
def test_exponent_round_trip(chi, idx):
    bounds = TABLE_RANGES[PARAM_NAMES[idx]]
    assert value_to_exponent(exponent_to_value(chi, bounds), bounds) == pytest.approx(chi, abs=1e-12)


def test_sample_candidate_zero_noise_and_counter():
    state = SearchState(chi_best=np.linspace(0.1, 0.8, 8), m=3)
    p = sample_candidate(state, ParamRange(), FixedDraw(0.0))
    np.testing.assert_allclose(p.as_array(), ParamRange().values(np.linspace(0.1, 0.8, 8)), rtol=1e-14)
    assert state.m == 4


def test_sample_candidate_in_ranges_and_seeded():
    ranges = ParamRange()
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    sa, sb = SearchState(chi_best=np.full(8, 0.9)), SearchState(chi_best=np.full(8, 0.9))
    for _ in range(2000):
        pa, pb = sample_candidate(sa, ranges, a), sample_candidate(sb, ranges, b)
        assert ranges.contains(pa)
        np.testing.assert_array_equal(pa.as_array(), pb.as_array())


@settings(max_examples=200, deadline=None)
@given(m=st.integers(0, 5000), M=st.integers(1, 50), dm=st.integers(0, 100), dM=st.integers(0, 5))
def test_half_width_non_increasing(m, M, dm, dM):
    s = SearchState(m=m, M=M)
    assert s.half_width == pytest.approx(0.6 / M * 0.995 ** m, rel=1e-12)
    assert SearchState(m=m + dm, M=M + dM).half_width <= s.half_width


def test_search_state_validation_and_round_trip():
    with pytest.raises(InvalidStateError):
        SearchState(chi_best=np.full(8, 1.2))
    with pytest.raises(InvalidStateError):
        SearchState(beta=1.0)
    s = SearchState(chi_best=np.full(8, 0.25), m=17, M=3, best_E=0.4)
    t = SearchState.from_dict(s.to_dict())
    np.testing.assert_array_equal(t.chi_best, s.chi_best)
    assert (t.m, t.M, t.best_E) == (17, 3, 0.4)


@pytest.fixture(scope="module")
def observed():
    """Frames from a plant in the learner's model class."""
    V = np.zeros((3, 6))
    V[0, 1:5] = [6.0, 12.0, 12.0, 6.0]
    V[1, 1:5] = [-4.0, -8.0, -8.0, -4.0]
    plan = MotionPlan([-1.2, 0.6, 0.4], 0.3, V)
    plant = PlantConfig(midrange_params(), StringGeometry(10, 0.3))
    return execute_manipulation(plan, plant, ArmConfig(), CameraModel())


def _run(observed, state, samples, seed, ranges=None, dt=5e-5):
    return estimate(observed.frames, observed.hand_trajectory, StringGeometry(10, 0.3), state,
                    ranges or ParamRange(), EstimationBudget(samples, 250), CameraModel(), MatchConfig(),
                    np.random.default_rng(seed), dt=dt)


def test_budget_one_returns_incumbent(observed):
    state = SearchState(chi_best=np.full(8, 0.5), m=4, M=2)
    res = _run(observed, state, 1, 0)
    np.testing.assert_allclose(res.params.as_array(), midrange_params().as_array(), rtol=1e-14)
    assert res.report.E > 0.9
    assert res.state.M == 3 and res.state.m == 4
    assert state.M == 2  # input state untouched


def test_estimate_improves_and_is_deterministic(observed):
    start = SearchState()
    base = _run(observed, start, 1, 0).report.E
    res = _run(observed, start, 500, 11)
    assert res.report.E > base
    assert res.state.best_E == res.report.E
    assert res.state.M == 2 and res.state.m == 499
    again = _run(observed, start, 500, 11)
    np.testing.assert_array_equal(res.params.as_array(), again.params.as_array())
    assert again.report.E == res.report.E


def test_counter_is_cumulative_unless_reset(observed):
    s = SearchState(m=120, M=2)
    assert _run(observed, s, 5, 0).state.m == 124
    s.reset_m_each_round = True
    assert _run(observed, s, 5, 0).state.m == 4


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_incumbent_retention(observed, seed):
    chi = np.random.default_rng(seed).uniform(0, 1, 8)
    state = SearchState(chi_best=chi, M=3)
    incumbent_E = _run(observed, state, 1, 0).report.E
    assert _run(observed, state, 12, seed).report.E >= incumbent_E - 1e-12


def test_all_candidates_diverge(observed):
    ranges = dict(TABLE_RANGES)
    ranges["k_s"] = (1e10, 1e11)
    with pytest.raises(EstimationFailed):
        _run(observed, SearchState(), 3, 0, ranges=ParamRange(ranges))


def test_budget_validation():
    with pytest.raises(InvalidStateError):
        EstimationBudget(0)
