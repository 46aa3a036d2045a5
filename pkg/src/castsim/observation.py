"""Virtual camera: binary string frames, dilation score fields, tip search."""

from __future__ import annotations

import math
import os
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence

import numpy as np
from scipy import ndimage

from .errors import FrameOutOfView, InvalidStateError, TipNotFound

# N, NE, E, SE, S, SW, W, NW as (d_col, d_row); rows grow downward
NEIGHBORS = ((0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1))
_CROSS8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class CameraModel:
    pixels_per_meter: float = 300.0
    image_width: int = 600
    image_height: int = 600
    world_origin_pixel: tuple = (210.0, 390.0)
    stroke_thickness: int = 3

    def __post_init__(self):
        if not self.pixels_per_meter > 0:
            raise InvalidStateError("pixels_per_meter must be positive")
        if self.image_width < 16 or self.image_height < 16:
            raise InvalidStateError("image dimensions must be at least 16 pixels")
        if self.stroke_thickness < 1:
            raise InvalidStateError("stroke_thickness must be >= 1")
        object.__setattr__(self, "world_origin_pixel", tuple(float(v) for v in self.world_origin_pixel))

    def project(self, points) -> np.ndarray:
        """World points (..., 2) in meters -> integer pixels (..., 2) as (col, row)."""
        pts = np.asarray(points, dtype=np.float64)
        col = np.floor(self.world_origin_pixel[0] + self.pixels_per_meter * pts[..., 0] + 0.5)
        row = np.floor(self.world_origin_pixel[1] - self.pixels_per_meter * pts[..., 1] + 0.5)
        # keep far-away points representable; they are off-image either way
        big = 1e9
        return np.stack([np.clip(col, -big, big), np.clip(row, -big, big)], axis=-1).astype(np.int64)

    def inside(self, pixels) -> np.ndarray:
        px = np.asarray(pixels)
        return ((px[..., 0] >= 0) & (px[..., 0] < self.image_width)
                & (px[..., 1] >= 0) & (px[..., 1] < self.image_height))


@dataclass
class BinaryFrame:
    timestamp: float
    bits: np.ndarray  # (height, width) bool
    grasp_pixel: tuple  # (col, row)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        self.grasp_pixel = (int(self.grasp_pixel[0]), int(self.grasp_pixel[1]))
        self.timestamp = float(self.timestamp)


@dataclass
class ScoreField:
    scores: np.ndarray  # (height, width) integers in [0, p_max]
    p_max: int


@dataclass
class FrameSeries:
    frames: List[BinaryFrame]
    sampling_period: float

    def __post_init__(self):
        if not self.frames:
            raise InvalidStateError("frame series must not be empty")

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f.timestamp for f in self.frames])


def _brush(thickness: int) -> np.ndarray:
    r = thickness / 2.0
    k = int(math.floor(r))
    yy, xx = np.mgrid[-k:k + 1, -k:k + 1]
    return (xx * xx + yy * yy) <= r * r


def _clip_segment(p0, p1, lo, hi):
    """Liang-Barsky clip of a pixel-space segment to the box [lo, hi]; None if outside."""
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for k in range(2):
        for p, q in ((-d[k], p0[k] - lo[k]), (d[k], hi[k] - p0[k])):
            if p == 0:
                if q < 0:
                    return None
            else:
                t = q / p
                if p < 0:
                    t0 = max(t0, t)
                else:
                    t1 = min(t1, t)
    if t0 > t1:
        return None
    return p0 + t0 * d, p0 + t1 * d


def _line_pixels(a, b) -> np.ndarray:
    """Integer line stepping between two pixels, endpoints included."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    steps = int(max(abs(b[0] - a[0]), abs(b[1] - a[1])))
    if steps == 0:
        return a[None, :]
    t = np.arange(steps + 1) / steps
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return np.floor(pts + 0.5).astype(np.int64)


def rasterize(points, camera: CameraModel, timestamp: float = 0.0) -> BinaryFrame:
    pts = np.asarray(points, dtype=np.float64)
    if not np.isfinite(pts).all():
        raise InvalidStateError("string points must be finite")
    px = camera.project(pts)
    grasp = px[0]
    if not camera.inside(grasp):
        raise FrameOutOfView(f"grasp pixel {tuple(grasp)} outside the {camera.image_width}x"
                             f"{camera.image_height} image at t={timestamp:.3f} s")
    w, h = camera.image_width, camera.image_height
    margin = camera.stroke_thickness + 1
    lo = np.array([-margin, -margin], dtype=np.float64)
    hi = np.array([w - 1 + margin, h - 1 + margin], dtype=np.float64)
    line = np.zeros((h + 2 * margin, w + 2 * margin), dtype=bool)
    for i in range(len(px)):
        a = px[i].astype(np.float64)
        b = px[i + 1].astype(np.float64) if i + 1 < len(px) else a
        clipped = _clip_segment(a, b, lo, hi)
        if clipped is None:
            continue
        seg = _line_pixels(np.floor(clipped[0] + 0.5), np.floor(clipped[1] + 0.5))
        seg = seg[(seg[:, 0] >= lo[0]) & (seg[:, 0] <= hi[0]) & (seg[:, 1] >= lo[1]) & (seg[:, 1] <= hi[1])]
        line[seg[:, 1] + margin, seg[:, 0] + margin] = True
    if camera.stroke_thickness > 1:
        line = ndimage.binary_dilation(line, structure=_brush(camera.stroke_thickness))
    bits = line[margin:margin + h, margin:margin + w]
    return BinaryFrame(timestamp, bits, (int(grasp[0]), int(grasp[1])))


def build_score_field(frame: BinaryFrame, p_max: int) -> ScoreField:
    """Dilate the string p_max - 1 times; ring d gets score p_max - d."""
    if p_max < 1:
        raise InvalidStateError("p_max must be >= 1")
    current = frame.bits.copy()
    scores = np.zeros(current.shape, dtype=np.int16)
    scores[current] = p_max
    for d in range(1, p_max):
        grown = ndimage.binary_dilation(current, structure=_CROSS8)
        scores[grown & ~current] = p_max - d
        current = grown
    return ScoreField(scores, int(p_max))


def locate_tip(frame: BinaryFrame) -> tuple:
    """Far end of the string component reached from the grasp pixel.

    A depth-first traversal (fixed N, NE, E, ..., NW neighbor order) enumerates
    the grasp's 8-connected component and fixes the finishing order.  Depth is
    the geodesic (8-connected path) distance from the grasp, since DFS-tree
    depth zig-zags across strokes several pixels wide.  The tip is the last
    finished pixel among those at maximal depth.
    """
    bits = frame.bits
    h, w = bits.shape
    gc, gr = frame.grasp_pixel
    if not (0 <= gc < w and 0 <= gr < h) or not bits[gr, gc]:
        raise TipNotFound(f"grasp pixel {frame.grasp_pixel} is not on the string")

    # geodesic depth by breadth-first layers
    depth = {(gc, gr): 0}
    queue = deque([(gc, gr)])
    while queue:
        c, r = queue.popleft()
        dn = depth[(c, r)] + 1
        for dc, dr in NEIGHBORS:
            nc, nr = c + dc, r + dr
            if 0 <= nc < w and 0 <= nr < h and bits[nr, nc] and (nc, nr) not in depth:
                depth[(nc, nr)] = dn
                queue.append((nc, nr))
    max_depth = max(depth.values())

    # iterative DFS emulating recursion; record finishing order
    visited = {(gc, gr)}
    stack = [((gc, gr), 0)]
    tip = (gc, gr)
    while stack:
        (c, r), k = stack[-1]
        while k < 8:
            dc, dr = NEIGHBORS[k]
            k += 1
            nxt = (c + dc, r + dr)
            if nxt in depth and nxt not in visited:
                stack[-1] = ((c, r), k)
                visited.add(nxt)
                stack.append((nxt, 0))
                break
        else:
            stack.pop()
            if depth[(c, r)] == max_depth:
                tip = (c, r)
    return tip


def sample_times(t_end: float, sampling_period: float, t_start: float = 0.0) -> np.ndarray:
    count = int(math.floor((t_end - t_start) / sampling_period + 1e-9)) + 1
    return t_start + sampling_period * np.arange(count)


def nearest_indices(sample_t: np.ndarray, state_t: np.ndarray, tolerance: float) -> np.ndarray:
    """Index of the nearest state time for each sample time; -1 when farther than tolerance."""
    state_t = np.asarray(state_t, dtype=np.float64)
    pos = np.clip(np.searchsorted(state_t, sample_t), 1, max(len(state_t) - 1, 1))
    left = np.clip(pos - 1, 0, len(state_t) - 1)
    right = np.clip(pos, 0, len(state_t) - 1)
    pick = np.where(np.abs(state_t[left] - sample_t) <= np.abs(state_t[right] - sample_t), left, right)
    pick = pick.astype(np.int64)
    pick[np.abs(state_t[pick] - sample_t) > tolerance] = -1
    return pick


def capture_series(states, camera: CameraModel, sampling_period: float = 0.04,
                   t_end: float | None = None) -> FrameSeries:
    """Rasterize the string at a fixed period from t = 0 through ``t_end`` (default: last state)."""
    times = np.asarray(getattr(states, "times", None) if hasattr(states, "times")
                       else [t for t, _ in states], dtype=np.float64)
    positions = (states.positions if hasattr(states, "positions")
                 else np.stack([s.positions for _, s in states]))
    if t_end is None:
        t_end = float(times[-1])
    wanted = sample_times(t_end, sampling_period, float(times[0]))
    spacing = float(np.min(np.diff(times))) if times.size > 1 else sampling_period
    idx = nearest_indices(wanted, times, 0.5 * spacing + 1e-9)
    if np.any(idx < 0):
        raise InvalidStateError("states do not cover the requested capture window")
    frames = [rasterize(positions[i], camera, float(t)) for t, i in zip(wanted, idx)]
    return FrameSeries(frames, float(sampling_period))


# ---------------------------------------------------------------------------
# PGM frame dumps
# ---------------------------------------------------------------------------


def write_pgm(path, bits: np.ndarray) -> None:
    img = np.where(np.asarray(bits, dtype=bool), 255, 0).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise InvalidStateError(f"{path}: not a binary PGM (P5)")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise InvalidStateError(f"{path}: 16-bit PGM not supported")
    pos += 1
    img = np.frombuffer(data[pos:pos + w * h], dtype=np.uint8)
    if img.size != w * h:
        raise InvalidStateError(f"{path}: truncated pixel data")
    return img.reshape(h, w) > (maxval // 2)


def write_frames(series: FrameSeries, directory) -> None:
    """One ``frame_NNNN.pgm`` per frame plus ``frames.idx``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"# sampling_period_s {series.sampling_period!r}"]
    for i, frame in enumerate(series.frames):
        write_pgm(directory / f"frame_{i:04d}.pgm", frame.bits)
        lines.append(f"{i} {frame.timestamp!r} {frame.grasp_pixel[0]} {frame.grasp_pixel[1]}")
    (directory / "frames.idx").write_text("\n".join(lines) + "\n")


def read_frames(directory) -> FrameSeries:
    directory = Path(directory)
    idx_path = directory / "frames.idx"
    if not idx_path.exists():
        raise InvalidStateError(f"{idx_path} not found")
    frames = []
    period = None
    for lineno, line in enumerate(idx_path.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "sampling_period_s":
                period = float(parts[1])
            continue
        parts = line.split()
        if len(parts) != 4:
            raise InvalidStateError(f"{idx_path}:{lineno}: expected 4 fields, got {len(parts)}")
        i, t, gx, gy = int(parts[0]), float(parts[1]), int(parts[2]), int(parts[3])
        bits = read_pgm(directory / f"frame_{i:04d}.pgm")
        frames.append(BinaryFrame(t, bits, (gx, gy)))
    if period is None:
        ts = [f.timestamp for f in frames]
        period = ts[1] - ts[0] if len(ts) > 1 else 0.0
    return FrameSeries(frames, period)
