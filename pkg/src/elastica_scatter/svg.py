"""Minimal SVG rendering of curve overlays and indicator heatmaps."""

from __future__ import annotations

import numpy as np

SIZE = 480
MARGIN = 20

# colormap anchors from dark blue through green to yellow
_ANCHORS = np.array(
    [
        [68, 1, 84],
        [59, 82, 139],
        [33, 145, 140],
        [94, 201, 98],
        [253, 231, 37],
    ],
    dtype=float,
)

STYLES = {
    "truth": 'stroke="#2ca02c" stroke-width="2" stroke-dasharray="2,4"',
    "initial": 'stroke="#e6b800" stroke-width="2" stroke-dasharray="8,5"',
    "reconstruction": 'stroke="#1f4fd1" stroke-width="2"',
    "level_line": 'stroke="#ffffff" stroke-width="2"',
}


class _Frame:
    """Affine map from a data box to SVG pixel coordinates (y axis up)."""

    def __init__(self, xmin, xmax, ymin, ymax):
        span = max(xmax - xmin, ymax - ymin)
        self.scale = (SIZE - 2 * MARGIN) / span
        self.x0 = xmin - 0.5 * (span - (xmax - xmin))
        self.y0 = ymin - 0.5 * (span - (ymax - ymin))

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        x = MARGIN + (pts[:, 0] - self.x0) * self.scale
        y = SIZE - MARGIN - (pts[:, 1] - self.y0) * self.scale
        return np.stack([x, y], axis=1)


def _path(pixels, style) -> str:
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pixels)
    return f'<polyline fill="none" {style} points="{coords}"/>'


def _document(body) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
        f'viewBox="0 0 {SIZE} {SIZE}">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def overlay_svg(curves: dict) -> str:
    """Closed polygons keyed by role (``truth``, ``initial``, ``reconstruction``)."""
    pts = np.vstack([np.asarray(c) for c in curves.values()])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.05 * max(hi - lo)
    frame = _Frame(lo[0] - pad, hi[0] + pad, lo[1] - pad, hi[1] + pad)
    body = [f'<rect width="{SIZE}" height="{SIZE}" fill="white"/>']
    for role in ("truth", "initial", "reconstruction"):
        if role in curves:
            body.append(_path(frame(curves[role]), STYLES[role]))
    return _document(body)


def colormap(values) -> np.ndarray:
    """RGB rows for values in ``[0, 1]``."""
    v = np.clip(np.asarray(values, dtype=float), 0.0, 1.0) * (len(_ANCHORS) - 1)
    lo = np.minimum(np.floor(v).astype(int), len(_ANCHORS) - 2)
    frac = (v - lo)[..., None]
    return (1 - frac) * _ANCHORS[lo] + frac * _ANCHORS[lo + 1]


def heatmap_svg(field, curves: dict | None = None) -> str:
    """Heatmap of ``1/chi`` with optional overlaid closed polygons."""
    x, y = field.x, field.y
    dx, dy = field.spacing
    frame = _Frame(x[0] - dx / 2, x[-1] + dx / 2, y[0] - dy / 2, y[-1] + dy / 2)
    inv = field.reciprocal
    scaled = (inv - inv.min()) / max(inv.max() - inv.min(), np.finfo(float).tiny)
    rgb = np.rint(colormap(scaled)).astype(int)
    w, h = dx * frame.scale, dy * frame.scale
    body = [f'<rect width="{SIZE}" height="{SIZE}" fill="white"/>']
    for j, yj in enumerate(y):
        corners = frame(np.stack([x - dx / 2, np.full_like(x, yj + dy / 2)], axis=1))
        for i, (px, py) in enumerate(corners):
            r, g, b = rgb[j, i]
            body.append(
                f'<rect x="{px:.2f}" y="{py:.2f}" width="{w + 0.3:.2f}" height="{h + 0.3:.2f}" '
                f'fill="rgb({r},{g},{b})"/>'
            )
    for role, curve in (curves or {}).items():
        body.append(_path(frame(curve), STYLES.get(role, STYLES["reconstruction"])))
    return _document(body)
