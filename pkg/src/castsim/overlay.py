"""SVG overlays of observed frames against simulated mass points."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .observation import BinaryFrame, CameraModel


def _runs(bits: np.ndarray):
    """Horizontal runs of set pixels as (row, col_start, length)."""
    padded = np.zeros((bits.shape[0], bits.shape[1] + 2), dtype=np.int8)
    padded[:, 1:-1] = bits
    d = np.diff(padded, axis=1)
    for r in np.nonzero(bits.any(axis=1))[0]:
        starts = np.nonzero(d[r] == 1)[0]
        ends = np.nonzero(d[r] == -1)[0]
        for s, e in zip(starts, ends):
            yield int(r), int(s), int(e - s)


def _panel(frame: BinaryFrame, sim_points, camera: CameraModel, target=None, obstacle=None,
           dx=0.0, dy=0.0, scale=1.0) -> list:
    out = [f'<g transform="translate({dx:.1f},{dy:.1f}) scale({scale:.4f})">',
           f'<rect width="{camera.image_width}" height="{camera.image_height}" fill="white" stroke="#999"/>']
    if obstacle is not None and obstacle.present:
        x0, x1, y0, y1 = obstacle.bounds
        (c0, r0), (c1, r1) = camera.project([[x0, y1], [x1, y0]])
        out.append(f'<rect x="{c0}" y="{r0}" width="{c1 - c0}" height="{r1 - r0}" fill="#c8c8c8"/>')
    if target is not None:
        (c0, r0), (c1, r1) = camera.project([[target.x_ref - target.w, target.y_ref + target.h],
                                             [target.x_ref + target.w, target.y_ref - target.h]])
        out.append(f'<rect x="{c0}" y="{r0}" width="{c1 - c0}" height="{r1 - r0}" fill="none" '
                   f'stroke="green" stroke-width="2"/>')
    for r, c, n in _runs(frame.bits):
        out.append(f'<rect x="{c}" y="{r}" width="{n}" height="1" fill="black"/>')
    if sim_points is not None:
        px = camera.project(sim_points)
        for c, r in px:
            out.append(f'<circle cx="{c}" cy="{r}" r="3" fill="none" stroke="red" stroke-width="1.5"/>')
    out.append(f'<text x="6" y="18" font-size="16">t = {frame.timestamp:.3f} s</text>')
    out.append("</g>")
    return out


def write_frame_svg(path, frame: BinaryFrame, sim_points, camera: CameraModel, target=None,
                    obstacle=None) -> None:
    body = _panel(frame, sim_points, camera, target, obstacle)
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{camera.image_width}" '
            f'height="{camera.image_height}">')
    Path(path).write_text("\n".join([head, *body, "</svg>"]) + "\n")


def write_montage_svg(path, frames, sim_points, camera: CameraModel, target=None, obstacle=None,
                      columns: int = 5, panel_px: int = 240, title: str = "") -> None:
    """All frames of one manipulation tiled in a grid."""
    scale = panel_px / max(camera.image_width, camera.image_height)
    rows = (len(frames) + columns - 1) // columns
    top = 24
    w = columns * (panel_px + 4)
    h = top + rows * (panel_px + 4)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
           f'<text x="4" y="16" font-size="14">{title} black: observed pixels, red: simulated mass points</text>']
    for k, frame in enumerate(frames):
        r, c = divmod(k, columns)
        pts = None if sim_points is None else sim_points[k]
        out.extend(_panel(frame, pts, camera, target, obstacle, c * (panel_px + 4), top + r * (panel_px + 4), scale))
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
