import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from castsim.errors import FrameOutOfView, InvalidStateError, TipNotFound
from castsim.observation import (BinaryFrame, CameraModel, build_score_field, capture_series, locate_tip,
                                 nearest_indices, rasterize, read_frames, read_pgm, sample_times,
                                 write_frames, write_pgm)
from castsim.string_model import Rollout, StringState

from oracles import chessboard_score_bruteforce

THIN = CameraModel(pixels_per_meter=100.0, world_origin_pixel=(50, 300), stroke_thickness=1)


def frame_from(bits, grasp=(0, 0)):
    return BinaryFrame(0.0, bits, grasp)


def test_camera_validation():
    with pytest.raises(InvalidStateError):
        CameraModel(pixels_per_meter=0)
    with pytest.raises(InvalidStateError):
        CameraModel(image_width=8)


def test_projection_convention():
    cam = CameraModel()
    np.testing.assert_array_equal(cam.project([0.0, 0.0]), [210, 390])
    # y up in the world is row up in the image
    np.testing.assert_array_equal(cam.project([0.1, 0.2]), [240, 330])


def test_meter_long_segment():
    frame = rasterize(np.array([[0.0, 0.0], [1.0, 0.0]]), THIN)
    assert frame.bits.sum() == 101
    assert frame.bits[300, 50:151].all()
    assert frame.grasp_pixel == (50, 300)


def test_coincident_points_make_a_disc():
    cam = CameraModel()
    frame = rasterize(np.zeros((5, 2)), cam)
    rows, cols = np.nonzero(frame.bits)
    assert frame.bits.sum() == 9
    assert set(zip(cols, rows)) == {(210 + dc, 390 + dr) for dc in (-1, 0, 1) for dr in (-1, 0, 1)}
    assert frame.bits[frame.grasp_pixel[1], frame.grasp_pixel[0]]


def test_grasp_outside_is_an_error():
    with pytest.raises(FrameOutOfView):
        rasterize(np.array([[5.0, 5.0], [0.0, 0.0]]), CameraModel())


def test_offscreen_parts_are_clipped():
    cam = CameraModel()
    frame = rasterize(np.array([[0.0, 0.0], [50.0, 0.0], [50.0, 50.0]]), cam)
    assert frame.bits[390, 210:].all()
    assert frame.bits[:385].sum() == 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), thickness=st.sampled_from([1, 2, 3, 5]))
def test_every_mass_point_is_drawn(seed, thickness):
    r = np.random.default_rng(seed)
    cam = CameraModel(stroke_thickness=thickness)
    steps = r.normal(0, 0.04, (9, 2))
    pts = np.vstack([[0.3, 0.5], [0.3, 0.5] + np.cumsum(steps, axis=0)])
    frame = rasterize(pts, cam)
    px = cam.project(pts)
    inside = cam.inside(px)
    assert frame.bits[px[inside, 1], px[inside, 0]].all()


def test_single_seed_score_field():
    bits = np.zeros((9, 9), dtype=bool)
    bits[4, 4] = True
    s = build_score_field(frame_from(bits, (4, 4)), 3).scores
    assert s[4, 4] == 3
    ring1 = np.zeros_like(bits)
    ring1[3:6, 3:6] = True
    ring1[4, 4] = False
    assert np.all(s[ring1] == 2)
    ring2 = np.zeros_like(bits)
    ring2[2:7, 2:7] = True
    ring2[3:6, 3:6] = False
    assert np.all(s[ring2] == 1)
    assert s[:2].sum() == 0 and s[7:].sum() == 0


def test_empty_frame_scores_zero():
    s = build_score_field(frame_from(np.zeros((20, 20), dtype=bool)), 8)
    assert not s.scores.any()


def test_score_field_matches_bruteforce(rng):
    for _ in range(10):
        bits = rng.random((32, 32)) < rng.uniform(0.001, 0.03)
        p_max = int(rng.integers(1, 10))
        got = build_score_field(frame_from(bits), p_max).scores
        np.testing.assert_array_equal(got, chessboard_score_bruteforce(bits, p_max))


def test_score_field_matches_distance_transform(rng):
    # independent route: scipy's chessboard distance transform
    bits = rng.random((64, 64)) < 0.01
    bits[5, 5] = True
    dist = ndimage.distance_transform_cdt(~bits, metric="chessboard")
    got = build_score_field(frame_from(bits), 8).scores
    np.testing.assert_array_equal(got, 8 - np.minimum(dist, 8))


def test_tip_of_straight_segment():
    bits = np.zeros((10, 30), dtype=bool)
    bits[5, 3:25] = True
    assert locate_tip(frame_from(bits, (3, 5))) == (24, 5)


def test_tip_of_single_pixel():
    bits = np.zeros((10, 10), dtype=bool)
    bits[2, 7] = True
    assert locate_tip(frame_from(bits, (7, 2))) == (7, 2)


def test_tip_requires_grasp_on_string():
    bits = np.zeros((10, 10), dtype=bool)
    bits[2, 7] = True
    with pytest.raises(TipNotFound):
        locate_tip(frame_from(bits, (1, 1)))


@pytest.mark.parametrize("thickness", [1, 3])
def test_tip_of_u_curve(thickness):
    cam = CameraModel(stroke_thickness=thickness)
    s = np.linspace(0, math.pi, 40)
    # U opening upward; the free end comes back near the grasp height
    pts = np.column_stack([0.3 - 0.1 * np.cos(s), 0.6 - 0.15 * np.sin(s)])
    frame = rasterize(pts, cam)
    tip = np.array(locate_tip(frame))
    end = cam.project(pts[-1])
    assert np.max(np.abs(tip - end)) <= thickness // 2
    assert np.max(np.abs(tip - np.array(frame.grasp_pixel))) > 50


def test_tip_of_thick_diagonal_is_far_end():
    cam = CameraModel(stroke_thickness=5)
    pts = np.array([[0.0, 0.8], [0.2, 0.6], [0.4, 0.4]])
    frame = rasterize(pts, cam)
    tip = np.array(locate_tip(frame))
    assert np.max(np.abs(tip - cam.project(pts[-1]))) <= 2


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_tip_is_on_grasp_component(seed):
    r = np.random.default_rng(seed)
    bits = r.random((24, 24)) < 0.45
    grasp = (int(r.integers(24)), int(r.integers(24)))
    bits[grasp[1], grasp[0]] = True
    tip = locate_tip(frame_from(bits, grasp))
    labels, _ = ndimage.label(bits, structure=np.ones((3, 3)))
    assert bits[tip[1], tip[0]]
    assert labels[tip[1], tip[0]] == labels[grasp[1], grasp[0]]


def test_sample_times_counting():
    np.testing.assert_allclose(sample_times(1.0, 0.2), [0, 0.2, 0.4, 0.6, 0.8, 1.0])
    assert len(sample_times(0.63, 0.04)) == 16


def test_nearest_indices():
    st_t = np.arange(0, 1.0001, 0.005)
    idx = nearest_indices(np.array([0.0, 0.041, 0.999, 1.2]), st_t, 0.0025)
    np.testing.assert_array_equal(idx, [0, 8, 200, -1])


def _rollout(positions, period=0.005):
    k = positions.shape[0]
    return Rollout(np.arange(k) * period, positions, np.zeros_like(positions))


def test_capture_counts_and_stationary_frames():
    pos = np.tile(np.column_stack([np.zeros(10), 0.8 - 0.03 * np.arange(10)]), (201, 1, 1))
    series = capture_series(_rollout(pos), CameraModel(), 0.2)
    assert len(series) == 6
    np.testing.assert_allclose(series.timestamps, [0, 0.2, 0.4, 0.6, 0.8, 1.0])
    for f in series:
        np.testing.assert_array_equal(f.bits, series[0].bits)


def test_capture_accepts_state_pairs():
    base = np.column_stack([np.zeros(4), 0.8 - 0.1 * np.arange(4)])
    states = [(k * 0.005, StringState(base + [0.001 * k, 0.0], np.zeros((4, 2)))) for k in range(41)]
    series = capture_series(states, CameraModel(), 0.04)
    assert len(series) == 6


def test_pgm_round_trip(tmp_path, rng):
    bits = rng.random((17, 23)) < 0.3
    write_pgm(tmp_path / "a.pgm", bits)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n23 17\n255\n")
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), bits)


def test_pgm_header_comments(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), [[False, True]])


def test_frame_directory_round_trip(tmp_path):
    s = np.linspace(0, 1, 10)
    pos = np.stack([np.column_stack([0.1 * np.sin(3 * t + s), 0.8 - 0.3 * s]) for t in np.arange(41) * 0.005])
    series = capture_series(_rollout(pos), CameraModel(), 0.04)
    write_frames(series, tmp_path / "frames")
    idx = (tmp_path / "frames" / "frames.idx").read_text().splitlines()
    assert idx[0].startswith("# sampling_period_s")
    assert idx[1].split()[0] == "0"
    back = read_frames(tmp_path / "frames")
    assert back.sampling_period == series.sampling_period
    for a, b in zip(series, back):
        assert a.timestamp == b.timestamp and a.grasp_pixel == b.grasp_pixel
        np.testing.assert_array_equal(a.bits, b.bits)


def test_read_frames_rejects_bad_index(tmp_path):
    (tmp_path / "frames.idx").write_text("0 0.0 1\n")
    with pytest.raises(InvalidStateError, match=":1:"):
        read_frames(tmp_path)
