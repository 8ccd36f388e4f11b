"""Factorization method indicator and level-line initial guesses.

With the far-field operator ``U`` discretized on matched direction grids
and ``A`` a regularized ``(U* U)^{-1/4}``, the indicator

    chi(z) = ||A r_z||^2,    r_z(x) = exp(-i k x.z),

is small inside the scatterer and large outside.  A contour of ``1/chi``
is fitted as a closed curve by solving ``1/chi(m) = beta`` with the same
Tikhonov machinery that drives the scattering inversion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import ShapePoint, is_simple, reconstruct_polygon, vertex_jacobian
from .optimize import (
    SolverSettings,
    TikhonovProblem,
    discrepancy_continuation,
)
from .shapes import shape_library

logger = logging.getLogger(__name__)

DEFAULT_CUTOFF = 1e-3
CHUNK = 4096
# the normalized level-line residual is small near the solution, so the
# absolute Gauss-Newton stopping tolerance is tightened accordingly
LEVEL_LINE_GN_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class FarFieldOperator:
    """Quadrature discretization ``(2 pi / m) u_inf(x_i, d_j)`` on one direction grid."""

    matrix: np.ndarray
    grid: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        grid = np.asarray(self.grid, dtype=float).reshape(-1, 2)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ConfigError("the far-field operator needs a square data matrix")
        if matrix.shape[0] != grid.shape[0]:
            raise ConfigError("direction grid does not match the data matrix")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "grid", grid)

    @classmethod
    def from_far_field(cls, far_field) -> "FarFieldOperator":
        """Build from a :class:`FarField` measured on a full-aperture matched grid."""
        meas, inc = far_field.measurement_dirs, far_field.incident_dirs
        if meas.shape != inc.shape or not np.allclose(meas, inc, rtol=0, atol=1e-12):
            raise ConfigError(
                "factorization needs identical incident and measurement direction grids"
            )
        m = len(meas)
        return cls((2 * np.pi / m) * far_field.values, meas)


@dataclass(frozen=True, eq=False)
class QuarterInverse:
    """``A = V diag(s^{-1/2}) V^H`` over the retained right singular vectors of ``U``."""

    vectors: np.ndarray
    singular_values: np.ndarray

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        coeff = self.vectors.conj().T @ v
        scale = self.singular_values**-0.5
        return self.vectors @ (coeff * (scale[:, None] if coeff.ndim == 2 else scale))

    def matrix(self) -> np.ndarray:
        return self(np.eye(self.vectors.shape[0]))

    def norm_squared(self, v) -> np.ndarray:
        """``||A v||^2`` for the columns of ``v`` (or a single vector)."""
        coeff = self.vectors.conj().T @ np.asarray(v, dtype=complex)
        weights = 1.0 / self.singular_values
        if coeff.ndim == 1:
            return float(np.sum(weights * np.abs(coeff) ** 2))
        return weights @ np.abs(coeff) ** 2


def quarter_inverse(U: FarFieldOperator, cutoff: float = DEFAULT_CUTOFF) -> QuarterInverse:
    """Truncated SVD approximation of ``(U* U)^{-1/4}``.

    Singular values below ``cutoff * sigma_max`` are dropped.
    """
    if cutoff < 0:
        raise ConfigError("cutoff must be nonnegative")
    matrix = U.matrix if isinstance(U, FarFieldOperator) else np.asarray(U, dtype=complex)
    _, s, vh = np.linalg.svd(matrix)
    keep = s > 0 if cutoff == 0 else s >= cutoff * s[0]
    keep &= s > 0
    return QuarterInverse(vh[keep].conj().T, s[keep])


def point_source_far_field(z, grid, k: float) -> np.ndarray:
    """``exp(-i k <x_j, z>)`` for every direction ``x_j``; points ``z`` may be stacked."""
    z = np.asarray(z, dtype=float)
    grid = np.asarray(grid, dtype=float)
    phase = grid @ z.T if z.ndim == 2 else grid @ z
    return np.exp(-1j * k * phase)


class Indicator:
    """Callable ``chi(z)`` with analytic gradient for a fixed ``A``."""

    def __init__(self, A: QuarterInverse, grid, k: float):
        self.A = A
        self.grid = np.asarray(grid, dtype=float)
        self.k = float(k)

    def _coefficients(self, points):
        r = point_source_far_field(points, self.grid, self.k)
        return self.A.vectors.conj().T @ r, r

    def __call__(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(points))
        weights = 1.0 / self.A.singular_values
        for start in range(0, len(points), CHUNK):
            coeff, _ = self._coefficients(points[start : start + CHUNK])
            out[start : start + CHUNK] = weights @ np.abs(coeff) ** 2
        return out

    def gradient(self, points) -> np.ndarray:
        """``2 Re <A r_z, A d_j r_z>`` with ``d_j r_z = -i k x_j r_z``; shape ``(P, 2)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        coeff, r = self._coefficients(points)
        weights = 1.0 / self.A.singular_values
        grad = np.empty((len(points), 2))
        vh = self.A.vectors.conj().T
        for j in range(2):
            dcoeff = vh @ (-1j * self.k * self.grid[:, j : j + 1] * r)
            grad[:, j] = 2 * np.real(weights @ (coeff.conj() * dcoeff))
        return grad


class FunctionIndicator:
    """Wrap a user-supplied indicator ``chi`` and its gradient."""

    def __init__(self, value, gradient):
        self._value = value
        self._gradient = gradient

    def __call__(self, points):
        return np.asarray(self._value(np.atleast_2d(points)), dtype=float)

    def gradient(self, points):
        return np.asarray(self._gradient(np.atleast_2d(points)), dtype=float)


@dataclass(frozen=True, eq=False)
class IndicatorField:
    """``chi`` sampled on a rectangular lattice; arrays have shape ``(ny, nx)``."""

    x: np.ndarray
    y: np.ndarray
    chi: np.ndarray

    @property
    def reciprocal(self) -> np.ndarray:
        return 1.0 / self.chi

    @property
    def points(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.x, self.y)
        return np.stack([xx.ravel(), yy.ravel()], axis=1)

    @property
    def spacing(self) -> tuple:
        return (self.x[1] - self.x[0], self.y[1] - self.y[0])


def indicator_field(A: QuarterInverse, box, resolution, k: float, grid) -> IndicatorField:
    """Evaluate ``chi`` on a lattice.

    ``box`` is ``(xmin, xmax, ymin, ymax)``; ``resolution`` is an integer
    or an ``(nx, ny)`` pair of lattice sizes including the box corners.
    """
    xmin, xmax, ymin, ymax = map(float, box)
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nx < 2 or ny < 2 or not (xmin < xmax and ymin < ymax):
        raise ConfigError("invalid sampling box or resolution")
    x = np.linspace(xmin, xmax, int(nx))
    y = np.linspace(ymin, ymax, int(ny))
    xx, yy = np.meshgrid(x, y)
    chi = Indicator(A, grid, k)(np.stack([xx.ravel(), yy.ravel()], axis=1))
    # guard against an exactly vanishing sum
    chi = np.maximum(chi, np.finfo(float).tiny)
    return IndicatorField(x, y, chi.reshape(int(ny), int(nx)))


def otsu_level(values, bins: int = 256) -> float:
    """Threshold maximizing the between-class variance of a value histogram."""
    values = np.asarray(values, dtype=float).ravel()
    hist, edges = np.histogram(values, bins=bins)
    centers = 0.5 * (edges[1:] + edges[:-1])
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    m0 = np.cumsum(hist * centers)
    mean0 = m0 / np.maximum(w0, 1)
    mean1 = (m0[-1] - m0) / np.maximum(w1, 1)
    between = (w0 * w1 * (mean0 - mean1) ** 2)[:-1]
    # an empty gap between the classes gives a plateau; take its middle
    best = np.flatnonzero(between >= between.max() * (1 - 1e-12))
    return float(0.5 * (edges[1 + best[0]] + edges[1 + best[-1]]))


def half_max_level(field: IndicatorField) -> float:
    return 0.5 * float(field.reciprocal.max())


def initial_circle(field: IndicatorField, level: float, n: int) -> ShapePoint:
    """Circle at the ``1/chi``-weighted centroid of ``{1/chi >= level}``.

    The radius matches the weighted second moment of a uniform disc,
    ``E|z - c|^2 = R^2 / 2``.
    """
    inv = field.reciprocal.ravel()
    mask = inv >= level
    if not np.any(mask):
        raise ConfigError(f"no lattice point reaches the level {level:.3g}")
    pts = field.points[mask]
    w = inv[mask]
    center = (w[:, None] * pts).sum(axis=0) / w.sum()
    second = (w * ((pts - center) ** 2).sum(axis=1)).sum() / w.sum()
    radius = max(np.sqrt(2 * second), 2 * max(field.spacing))
    return shape_library("circle", n, radius=float(radius), center=tuple(center))


class LevelLineOperator:
    """``m -> scale / chi(v_i)`` at the n polygon vertices.

    The data norm is the ``1/n``-weighted l2 norm.  ``scale`` rescales
    the level to order one so absolute stopping tolerances are meaningful.
    """

    requires_simple = False

    def __init__(self, indicator, n: int, scale: float = 1.0):
        self.indicator = indicator
        self.weight = 1.0 / n
        self.scale = float(scale)

    def evaluate(self, m: ShapePoint) -> np.ndarray:
        verts = reconstruct_polygon(m)[:-1]
        return self.scale / self.indicator(verts)

    def linearize(self, m: ShapePoint):
        verts = reconstruct_polygon(m)[:-1]
        chi = self.indicator(verts)
        grad = self.indicator.gradient(verts)
        vj = vertex_jacobian(m)[:-1]
        jac = -self.scale * np.einsum("ic,icj->ij", grad / chi[:, None] ** 2, vj)
        return self.scale / chi, jac


@dataclass
class LevelLineResult:
    shape: ShapePoint
    alpha: float
    trace: object
    simple: bool

    @property
    def flagged(self) -> bool:
        return not (self.simple and self.trace.converged)


def level_line_fit(
    indicator,
    beta: float,
    m0: ShapePoint,
    settings: SolverSettings | None = None,
    tolerance: float = 1e-3,
) -> LevelLineResult:
    """Fit a closed curve to the level set ``1/chi = beta``.

    The penalty is the bending energy relative to ``m0``.  The equation
    is solved in the normalized form ``1/(beta chi(m)) = 1`` with
    discrepancy level ``tolerance`` in the ``1/n``-weighted norm.
    """
    if not beta > 0:
        raise ConfigError("level beta must be positive")
    op = LevelLineOperator(indicator, m0.n, scale=1.0 / beta)
    problem = TikhonovProblem(op, np.ones(m0.n), tolerance, m0)
    if settings is None:
        settings = SolverSettings(gn_tolerance=LEVEL_LINE_GN_TOLERANCE)
    shape, alpha, trace = discrepancy_continuation(problem, m0, settings)
    simple = is_simple(reconstruct_polygon(shape))
    if not simple:
        logger.warning("fitted level line is not simple")
    return LevelLineResult(shape, alpha, trace, simple)
