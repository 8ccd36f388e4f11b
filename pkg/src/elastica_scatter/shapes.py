"""Library of analytic ground-truth curves sampled onto the shape manifold.

Every family is a closed counter-clockwise curve given by a dense
parameterization.  :func:`shape_library` resamples it at n points of equal
arclength, reads off the chord angles and total length, and restores the
closure constraint.

Families
--------
circle      ``c + R (cos s, sin s)``
ellipse     ``c + rot(phi) (a cos s, b sin s)``
kite        ``scale * (cos s + 0.65 cos 2s - 0.65, 1.5 sin s) + c``
three_lobe  polar ``r(s) = R (1 + amp cos 3s)``
peanut      polar ``r(s) = R (1 + waist cos 2s)``
horseshoe   band of half-width ``w`` around a circular arc of radius ``R``
            leaving a gap of angular width ``gap`` at the bottom
s_shape     band of half-width ``w`` around two joined circular arcs
"""

from __future__ import annotations

import numpy as np

from .geometry import Partition, ShapePoint, restore_feasibility

DENSE = 8192


def _circle(s, radius=1.0, center=(0.0, 0.0)):
    return np.stack([radius * np.cos(s), radius * np.sin(s)], axis=1) + center


def _ellipse(s, a=1.0, b=0.6, rotation=0.0, center=(0.0, 0.0)):
    pts = np.stack([a * np.cos(s), b * np.sin(s)], axis=1)
    c, sn = np.cos(rotation), np.sin(rotation)
    return pts @ np.array([[c, sn], [-sn, c]]) + center


def _kite(s, scale=1.0, center=(0.0, 0.0)):
    pts = np.stack([np.cos(s) + 0.65 * np.cos(2 * s) - 0.65, 1.5 * np.sin(s)], axis=1)
    return scale * pts + center


def _polar(radius_fn, center):
    def curve(s):
        r = radius_fn(s)
        return np.stack([r * np.cos(s), r * np.sin(s)], axis=1) + center

    return curve


def _three_lobe(s, radius=1.0, amp=0.25, rotation=0.0, center=(0.0, 0.0)):
    return _polar(lambda t: radius * (1 + amp * np.cos(3 * (t - rotation))), center)(s)


def _peanut(s, radius=1.0, waist=0.35, rotation=0.0, center=(0.0, 0.0)):
    return _polar(lambda t: radius * (1 + waist * np.cos(2 * (t - rotation))), center)(s)


def _band(centerline, tangent, half_width, count):
    """Closed outline of a band around an open centerline with round caps."""
    u = np.linspace(0.0, 1.0, count)
    c = centerline(u)
    tan = tangent(u)
    tan = tan / np.linalg.norm(tan, axis=1)[:, None]
    nrm = np.stack([-tan[:, 1], tan[:, 0]], axis=1)
    right = c - half_width * nrm
    left = (c + half_width * nrm)[::-1]
    cap = np.linspace(0.0, np.pi, count // 4)[1:-1]
    # end cap turns from the right side to the left side around c[-1]
    t_end, n_end = tan[-1], nrm[-1]
    end = c[-1] + half_width * (
        -np.cos(cap)[:, None] * n_end + np.sin(cap)[:, None] * t_end
    )
    t_start, n_start = tan[0], nrm[0]
    start = c[0] + half_width * (np.cos(cap)[:, None] * n_start - np.sin(cap)[:, None] * t_start)
    return np.concatenate([right, end, left, start])


def _horseshoe(radius=0.75, half_width=0.25, gap=1.2, center=(0.0, 0.0), count=DENSE):
    a0 = -np.pi / 2 + gap / 2
    a1 = 3 * np.pi / 2 - gap / 2

    def centerline(u):
        a = a0 + u * (a1 - a0)
        return radius * np.stack([np.cos(a), np.sin(a)], axis=1)

    def tangent(u):
        a = a0 + u * (a1 - a0)
        return np.stack([-np.sin(a), np.cos(a)], axis=1)

    return _band(centerline, tangent, half_width, count) + center


def _s_shape(radius=0.45, half_width=0.15, center=(0.0, 0.0), count=DENSE):
    # upper arc: ccw around (0, r) from pi/4 to 3pi/2; lower arc: cw around (0, -r)
    # from pi/2 to -3pi/4 (point symmetric to the upper arc)
    up0, up1 = np.pi / 4, 3 * np.pi / 2
    lo0, lo1 = np.pi / 2, -3 * np.pi / 4
    len_up, len_lo = up1 - up0, lo0 - lo1
    split = len_up / (len_up + len_lo)

    def centerline(u):
        u = np.atleast_1d(u)
        out = np.empty((u.size, 2))
        first = u <= split
        a = up0 + (u[first] / split) * len_up
        out[first] = np.stack([radius * np.cos(a), radius + radius * np.sin(a)], axis=1)
        b = lo0 - ((u[~first] - split) / (1 - split)) * len_lo
        out[~first] = np.stack([radius * np.cos(b), -radius + radius * np.sin(b)], axis=1)
        return out

    def tangent(u):
        u = np.atleast_1d(u)
        out = np.empty((u.size, 2))
        first = u <= split
        a = up0 + (u[first] / split) * len_up
        out[first] = np.stack([-np.sin(a), np.cos(a)], axis=1)
        b = lo0 - ((u[~first] - split) / (1 - split)) * len_lo
        out[~first] = np.stack([np.sin(b), -np.cos(b)], axis=1)
        return out

    return _band(centerline, tangent, half_width, count) + center


_PARAMETRIC = {
    "circle": _circle,
    "ellipse": _ellipse,
    "kite": _kite,
    "three_lobe": _three_lobe,
    "peanut": _peanut,
}
_OUTLINES = {"horseshoe": _horseshoe, "s_shape": _s_shape}

SHAPE_NAMES = tuple(sorted(_PARAMETRIC) + sorted(_OUTLINES))


def dense_outline(name: str, **params) -> np.ndarray:
    """Densely sampled closed outline (first point not repeated), counter-clockwise."""
    if name in _PARAMETRIC:
        s = 2 * np.pi * np.arange(DENSE) / DENSE
        pts = _PARAMETRIC[name](s, **params)
    elif name in _OUTLINES:
        pts = _OUTLINES[name](**params)
    else:
        raise KeyError(f"unknown shape {name!r}; choose from {', '.join(SHAPE_NAMES)}")
    area = 0.5 * np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
    if area < 0:
        pts = pts[::-1]
    return np.asarray(pts, dtype=float)


def _vertices_to_shape(verts) -> ShapePoint:
    n = len(verts)
    chords = np.roll(verts, -1, axis=0) - verts
    theta = np.unwrap(np.arctan2(chords[:, 1], chords[:, 0]))
    length = float(np.linalg.norm(chords, axis=1).sum())
    m = ShapePoint(theta, length, verts[0], Partition.uniform(n))
    return restore_feasibility(m, tol=1e-13)


def _arclength_samples(ring, n):
    """Fractional indices into ``ring`` at n equal-arclength stations."""
    seg = np.linalg.norm(np.diff(ring, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    return np.interp(arc[-1] * np.arange(n) / n, arc, np.arange(len(ring)))


def polygon_to_shape(points, n: int) -> ShapePoint:
    """Resample a closed curve at n equal-arclength points and restore closure."""
    pts = np.asarray(points, dtype=float)
    if np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    ring = np.vstack([pts, pts[:1]])
    idx = _arclength_samples(ring, n)
    grid = np.arange(len(ring))
    verts = np.stack([np.interp(idx, grid, ring[:, 0]), np.interp(idx, grid, ring[:, 1])], axis=1)
    return _vertices_to_shape(verts)


def shape_library(name: str, n: int = 100, **params) -> ShapePoint:
    """Ground-truth shape ``name`` on the uniform n-partition.

    Raises ``KeyError`` for unknown names.
    """
    if name not in _PARAMETRIC:
        return polygon_to_shape(dense_outline(name, **params), n)
    # evaluate the parameterization itself so vertices lie exactly on the curve
    # (the parametric families are counter-clockwise, so dense_outline keeps their order)
    pts = dense_outline(name, **params)
    station = _arclength_samples(np.vstack([pts, pts[:1]]), n) * (2 * np.pi / DENSE)
    return _vertices_to_shape(_PARAMETRIC[name](station, **params))
