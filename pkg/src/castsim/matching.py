"""Matching rate E between simulated mass points and observed string frames."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import AlignmentError, InvalidStateError
from .observation import CameraModel, FrameSeries, ScoreField, build_score_field, locate_tip, nearest_indices


@dataclass(frozen=True)
class MatchConfig:
    p_max: int = 8
    delta_w: float = 0.25
    tip_bin_pixels: int = 3

    def __post_init__(self):
        if self.p_max < 1:
            raise InvalidStateError("p_max must be >= 1")
        if self.delta_w < 0:
            raise InvalidStateError("delta_w must be >= 0")
        if self.tip_bin_pixels < 1:
            raise InvalidStateError("tip_bin_pixels must be >= 1")


@dataclass
class MatchReport:
    E: float
    per_frame: List[float]
    frames_used: int

    def to_dict(self) -> dict:
        return {"E": self.E, "per_frame": list(self.per_frame), "frames_used": self.frames_used}


def point_weights(n: int, delta_w: float) -> np.ndarray:
    if n < 1:
        raise InvalidStateError("n must be >= 1")
    return 1.0 + np.arange(n) * float(delta_w)


def tip_proximity_score(sim_tip_pixel, actual_tip_pixel, config: MatchConfig):
    """p_max minus one level per ``tip_bin_pixels`` of chessboard distance, floored at 0."""
    d = np.max(np.abs(np.asarray(sim_tip_pixel, dtype=np.int64)
                      - np.asarray(actual_tip_pixel, dtype=np.int64)), axis=-1)
    score = np.maximum(0, config.p_max - d // config.tip_bin_pixels)
    return int(score) if np.ndim(score) == 0 else score


def _field_lookup(scores: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    h, w = scores.shape
    c = pixels[..., 0]
    r = pixels[..., 1]
    ok = (c >= 0) & (c < w) & (r >= 0) & (r < h)
    out = np.zeros(c.shape, dtype=np.int64)
    out[ok] = scores[r[ok], c[ok]]
    return out


def frame_score(sim_points, score_field: ScoreField, actual_tip, weights, config: MatchConfig) -> float:
    """E_f for one frame; ``sim_points`` are (n, 2) pixels with the tip last."""
    px = np.asarray(sim_points, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[0] != px.shape[0]:
        raise InvalidStateError("weights must have one entry per mass point")
    p = _field_lookup(score_field.scores, px[:-1])
    p_tip = tip_proximity_score(px[-1], actual_tip, config)
    num = float(np.dot(p, weights[:-1]) + p_tip * weights[-1])
    return num / (config.p_max * float(np.sum(weights)))


class ObservationScorer:
    """Score fields and actual tips of a frame series, built once and reused.

    ``score`` evaluates E for a batch of simulated trajectories sampled at the
    frame timestamps.
    """

    def __init__(self, observed: FrameSeries, camera: CameraModel, config: MatchConfig):
        if len(observed) == 0:
            raise InvalidStateError("empty frame series")
        self.camera = camera
        self.config = config
        self.timestamps = observed.timestamps
        self.fields = np.stack([build_score_field(f, config.p_max).scores for f in observed])
        self.tips = np.array([locate_tip(f) for f in observed], dtype=np.int64)

    def __len__(self):
        return len(self.timestamps)

    def align(self, sim_times, period: float | None = None) -> np.ndarray:
        sim_times = np.asarray(sim_times, dtype=np.float64)
        if period is None:
            period = float(np.min(np.diff(sim_times))) if sim_times.size > 1 else 0.0
        idx = nearest_indices(self.timestamps, sim_times, 0.5 * period + 1e-9)
        if np.any(idx < 0):
            bad = self.timestamps[idx < 0][0]
            raise AlignmentError(f"no simulated sample within half a period of t={bad:.4f} s")
        return idx

    def score(self, positions: np.ndarray) -> np.ndarray:
        """positions (B, F, n, 2) in meters -> per-frame scores (B, F)."""
        positions = np.asarray(positions, dtype=np.float64)
        b, f, n, _ = positions.shape
        if f != len(self):
            raise AlignmentError(f"expected {len(self)} frames, got {f}")
        px = self.camera.project(positions)
        w = point_weights(n, self.config.delta_w)
        frames = np.arange(f)[None, :, None]
        h, wd = self.fields.shape[1:]
        body = px[:, :, :-1, :]
        c, r = body[..., 0], body[..., 1]
        ok = (c >= 0) & (c < wd) & (r >= 0) & (r < h)
        p = np.zeros(c.shape, dtype=np.int64)
        fi = np.broadcast_to(frames, c.shape)
        p[ok] = self.fields[fi[ok], r[ok], c[ok]]
        p_tip = tip_proximity_score(px[:, :, -1, :], self.tips[None, :, :], self.config)
        num = p @ w[:-1] + p_tip * w[-1]
        return num / (self.config.p_max * float(np.sum(w)))


def matching_rate(sim_states, observed: FrameSeries, camera: CameraModel, config: MatchConfig,
                  scorer: ObservationScorer | None = None) -> MatchReport:
    """E = mean over frames of E_f, pairing each frame with the nearest simulated sample."""
    if len(observed.frames) == 0:
        raise InvalidStateError("empty frame series")
    if scorer is None:
        scorer = ObservationScorer(observed, camera, config)
    if hasattr(sim_states, "times"):
        times, positions = np.asarray(sim_states.times), np.asarray(sim_states.positions)
    else:
        times = np.array([t for t, _ in sim_states])
        positions = np.stack([s.positions for _, s in sim_states])
    period = float(np.min(np.diff(times))) if times.size > 1 else 0.0
    idx = scorer.align(times, period)
    per_frame = scorer.score(positions[idx][None])[0]
    return MatchReport(float(np.mean(per_frame)), [float(v) for v in per_frame], len(per_frame))
