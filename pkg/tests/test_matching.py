import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from castsim.arm import ArmConfig, generate_motion, realize_trajectory
from castsim.errors import AlignmentError, InvalidStateError, LimitViolation
from castsim.matching import (MatchConfig, ObservationScorer, frame_score, matching_rate, point_weights,
                              tip_proximity_score)
from castsim.observation import CameraModel, FrameSeries, ScoreField, build_score_field, capture_series
from castsim.string_model import Rollout, StringGeometry, init_hanging_state, simulate_rollout

from conftest import midrange_params


def test_point_weights():
    np.testing.assert_allclose(point_weights(10, 0.25), 1.0 + 0.25 * np.arange(10))
    assert point_weights(10, 0.25)[-1] == 3.25
    np.testing.assert_array_equal(point_weights(4, 0.0), np.ones(4))
    np.testing.assert_array_equal(point_weights(1, 0.25), [1.0])
    with pytest.raises(InvalidStateError):
        point_weights(0, 0.25)


def test_tip_score_examples():
    cfg = MatchConfig()
    assert tip_proximity_score((5, 5), (5, 5), cfg) == 8
    assert tip_proximity_score((0, 0), (25, 3), cfg) == 0
    assert tip_proximity_score((10, 10), (17, 12), cfg) == 6
    assert tip_proximity_score((10, 10), (12, 8), cfg) == 8


def test_toy_frame_score():
    cfg = MatchConfig(p_max=4, delta_w=0.25)
    scores = np.array([[4, 2, 0], [0, 0, 0]])
    field = ScoreField(scores, 4)
    pts = np.array([[0, 0], [1, 0], [2, 1]])
    e = frame_score(pts, field, (2, 1), point_weights(3, 0.25), cfg)
    assert e == pytest.approx(12.5 / 15, abs=1e-15)


def test_frame_score_extremes():
    cfg = MatchConfig()
    field = ScoreField(np.full((20, 20), 8), 8)
    pts = np.array([[1, 1], [2, 2], [3, 3]])
    assert frame_score(pts, field, (3, 3), point_weights(3, 0.25), cfg) == 1.0
    far = np.array([[-100, -100], [500, 500], [900, 900]])
    assert frame_score(far, field, (3, 3), point_weights(3, 0.25), cfg) == 0.0


def test_frame_score_weight_length_checked():
    field = ScoreField(np.zeros((5, 5), dtype=int), 8)
    with pytest.raises(InvalidStateError):
        frame_score(np.zeros((3, 2), dtype=int), field, (0, 0), np.ones(2), MatchConfig())


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 10.0))
def test_frame_score_properties(seed, scale):
    r = np.random.default_rng(seed)
    cfg = MatchConfig(p_max=int(r.integers(1, 10)), delta_w=float(r.uniform(0, 1)))
    field = ScoreField(r.integers(0, cfg.p_max + 1, (12, 12)), cfg.p_max)
    n = int(r.integers(2, 8))
    pts = r.integers(-3, 15, (n, 2))
    tip = tuple(r.integers(0, 12, 2))
    w = point_weights(n, cfg.delta_w)
    e = frame_score(pts, field, tip, w, cfg)
    assert 0.0 <= e <= 1.0
    assert frame_score(pts, field, tip, scale * w, cfg) == pytest.approx(e, abs=1e-12)
    # raising one field value under a point never lowers the score
    inside = [(c, rr) for c, rr in pts[:-1] if 0 <= c < 12 and 0 <= rr < 12]
    if inside:
        c, rr = inside[0]
        bumped = field.scores.copy()
        bumped[rr, c] = cfg.p_max
        assert frame_score(pts, ScoreField(bumped, cfg.p_max), tip, w, cfg) >= e - 1e-15


def _plant_rollout(seed, params=None):
    cfg = ArmConfig()
    rng = np.random.default_rng(seed)
    while True:
        try:
            hand = realize_trajectory(generate_motion(rng, cfg), cfg)
            break
        except LimitViolation:
            continue
    params = midrange_params() if params is None else params
    g = StringGeometry(10, 0.3)
    return simulate_rollout(params, g, hand, init_hanging_state(hand[0][1], g, params))


def test_self_match_is_near_one():
    cam, cfg = CameraModel(), MatchConfig()
    for seed in range(3):
        roll = _plant_rollout(seed)
        series = capture_series(roll, cam)
        report = matching_rate(roll, series, cam, cfg)
        assert report.E >= 0.95
        assert report.frames_used == len(series)
        assert report.E == pytest.approx(np.mean(report.per_frame))


def test_offscreen_simulation_scores_zero():
    cam, cfg = CameraModel(), MatchConfig()
    roll = _plant_rollout(0)
    series = capture_series(roll, cam)
    moved = Rollout(roll.times, roll.positions + 10.0, roll.velocities)
    assert matching_rate(moved, series, cam, cfg).E == 0.0


def test_single_frame_rate_equals_frame_score():
    cam, cfg = CameraModel(), MatchConfig()
    roll = _plant_rollout(1)
    series = capture_series(roll, cam)
    one = FrameSeries([series[3]], series.sampling_period)
    report = matching_rate(roll, one, cam, cfg)
    k = int(np.argmin(np.abs(roll.times - series[3].timestamp)))
    field = build_score_field(series[3], cfg.p_max)
    from castsim.observation import locate_tip
    ref = frame_score(cam.project(roll.positions[k]), field, locate_tip(series[3]), point_weights(10, 0.25), cfg)
    assert report.E == ref


def test_alignment_errors():
    cam, cfg = CameraModel(), MatchConfig()
    roll = _plant_rollout(2)
    series = capture_series(roll, cam)
    short = Rollout(roll.times[:20], roll.positions[:20], roll.velocities[:20])
    with pytest.raises(AlignmentError):
        matching_rate(short, series, cam, cfg)


def test_batch_scorer_matches_per_frame(rng):
    cam, cfg = CameraModel(), MatchConfig()
    roll = _plant_rollout(3)
    series = capture_series(roll, cam)
    scorer = ObservationScorer(series, cam, cfg)
    idx = scorer.align(roll.times)
    batch = np.stack([roll.positions[idx], roll.positions[idx] + rng.normal(0, 0.01, (len(idx), 10, 2))])
    got = scorer.score(batch)
    from castsim.observation import locate_tip
    for b in range(2):
        for f, frame in enumerate(series):
            ref = frame_score(cam.project(batch[b, f]), build_score_field(frame, cfg.p_max),
                              locate_tip(frame), point_weights(10, cfg.delta_w), cfg)
            assert got[b, f] == pytest.approx(ref, abs=1e-15)
