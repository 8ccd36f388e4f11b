"""Sound-soft Helmholtz scattering by a closed curve in the plane.

The scattered field is sought as a combined double/single layer potential

    u_s(x) = int_Gamma ( dPhi(x,y)/dnu(y) - i eta Phi(x,y) ) phi(y) ds(y)

which leads to the second-kind equation ``(I + K - i eta S) phi = -2 u_i``
on the boundary.  Boundaries are 2 pi periodic trigonometric polynomials
and the equation is discretized by the Nyström method with logarithmic
kernel splitting on ``2N`` equidistant nodes ``t_j = pi j / N``.

The domain derivative needs the normal derivative of the total field,
which solves ``(I + K' - i eta S) psi = 2 du_i/dnu - 2 i eta u_i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy.special import hankel1

from .errors import ConfigError, ForwardSolveError, SelfIntersectionError
from .geometry import ShapePoint, TangentVector, is_simple, reconstruct_polygon, vertex_jacobian

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286061


def equidistant_directions(count: int, offset: float = 0.0) -> np.ndarray:
    """Unit vectors at angles ``offset + 2 pi j / count``."""
    phi = offset + 2.0 * np.pi * np.arange(count) / count
    return np.stack([np.cos(phi), np.sin(phi)], axis=1)


@dataclass(frozen=True, eq=False)
class ScatterConfig:
    """Wavenumber, direction grids and discretization sizes of the forward map.

    Attributes
    ----------
    k : float
        Wavenumber.
    incident_dirs, measurement_dirs : ndarray, shape (m, 2)
        Unit direction vectors.
    nystrom_points : int
        Number ``2N`` of Nyström nodes (even, at least 16).
    coupling : float, optional
        Coupling parameter ``eta`` of the combined layer; defaults to ``k``.
    modes : int
        Maximal degree of the trigonometric interpolant of polygons.
    """

    k: float
    incident_dirs: np.ndarray
    measurement_dirs: np.ndarray
    nystrom_points: int = 256
    coupling: float | None = None
    modes: int = 64

    def __post_init__(self):
        if not (np.isfinite(self.k) and self.k > 0):
            raise ConfigError(f"wavenumber must be positive, got {self.k}")
        for name in ("incident_dirs", "measurement_dirs"):
            d = np.array(getattr(self, name), dtype=float).reshape(-1, 2)
            if d.shape[0] == 0:
                raise ConfigError(f"{name} is empty")
            if np.max(np.abs(np.linalg.norm(d, axis=1) - 1.0)) > 1e-14:
                raise ConfigError(f"{name} must be unit vectors")
            d.setflags(write=False)
            object.__setattr__(self, name, d)
        if self.nystrom_points % 2 or self.nystrom_points < 16:
            raise ConfigError("nystrom_points must be even and >= 16")
        if self.modes < 1:
            raise ConfigError("modes must be positive")
        if self.coupling is not None and self.coupling < 0:
            raise ConfigError("coupling must be nonnegative")

    @classmethod
    def equidistant(cls, k, n_incident=20, n_measurement=40, **kwargs) -> "ScatterConfig":
        return cls(
            k,
            equidistant_directions(n_incident),
            equidistant_directions(n_measurement),
            **kwargs,
        )

    @property
    def eta(self) -> float:
        return self.k if self.coupling is None else float(self.coupling)

    @property
    def weight(self) -> float:
        """Quadrature weight of the data-space inner product."""
        return (2 * np.pi / len(self.measurement_dirs)) * (2 * np.pi / len(self.incident_dirs))

    @property
    def data_shape(self) -> tuple:
        return (len(self.measurement_dirs), len(self.incident_dirs))


@dataclass(frozen=True, eq=False)
class FarField:
    """Far-field samples, rows = measurement directions, columns = incident directions."""

    values: np.ndarray
    measurement_dirs: np.ndarray
    incident_dirs: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (len(self.measurement_dirs), len(self.incident_dirs)):
            raise ValueError(f"far field of shape {values.shape} does not match the grids")
        object.__setattr__(self, "values", values)

    @property
    def weight(self) -> float:
        return (2 * np.pi / self.values.shape[0]) * (2 * np.pi / self.values.shape[1])

    def norm(self) -> float:
        return float(np.sqrt(self.weight) * np.linalg.norm(self.values))

    def vec(self) -> np.ndarray:
        """Column-major stacking (measurement index fastest)."""
        return self.values.reshape(-1, order="F")

    def like(self, vector) -> "FarField":
        values = np.asarray(vector).reshape(self.values.shape, order="F")
        return FarField(values, self.measurement_dirs, self.incident_dirs)


# --------------------------------------------------------------------------
# Trigonometric boundaries
# --------------------------------------------------------------------------


class SmoothBoundary:
    """Closed curve ``z(s) = sum_{|m|<=N} c_m e^{ims}`` for ``s`` in ``[0, 2 pi)``.

    ``coeffs`` has shape ``(2N+1, 2)``: row ``m + N`` holds the complex
    coefficients of the x and y components.
    """

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim != 2 or coeffs.shape[1] != 2 or coeffs.shape[0] % 2 != 1:
            raise ValueError("coefficients must have shape (2N+1, 2)")
        self.coeffs = coeffs
        self.degree = coeffs.shape[0] // 2

    @property
    def fourier_x(self):
        return self.coeffs[:, 0]

    @property
    def fourier_y(self):
        return self.coeffs[:, 1]

    @classmethod
    def circle(cls, radius=1.0, center=(0.0, 0.0)) -> "SmoothBoundary":
        c = np.zeros((3, 2), dtype=complex)
        c[1] = center
        c[0] = [radius / 2, 1j * radius / 2]
        c[2] = [radius / 2, -1j * radius / 2]
        return cls(c)

    @classmethod
    def from_function(cls, curve, degree: int) -> "SmoothBoundary":
        """Interpolate a vectorized parameterization ``curve(s) -> (len(s), 2)``."""
        count = 2 * degree + 1
        s = 2 * np.pi * np.arange(count) / count
        coeffs, _ = _trig_fit(np.asarray(curve(s), dtype=float), degree, None)
        return cls(coeffs)

    def evaluate(self, s, derivative: int = 0) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        m = np.arange(-self.degree, self.degree + 1)
        basis = np.exp(1j * np.outer(s, m)) * (1j * m) ** derivative
        return (basis @ self.coeffs).real

    def nodes(self, count: int):
        """Positions, first and second derivatives at ``s_j = 2 pi j / count``."""
        s = 2 * np.pi * np.arange(count) / count
        return s, self.evaluate(s), self.evaluate(s, 1), self.evaluate(s, 2)

    def translated(self, shift) -> "SmoothBoundary":
        c = self.coeffs.copy()
        c[self.degree] += np.asarray(shift, dtype=float)
        return SmoothBoundary(c)

    def rotated(self, angle: float) -> "SmoothBoundary":
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        return SmoothBoundary(self.coeffs @ rot.T)


def _trig_fit(samples, modes, params):
    """Trigonometric coefficients (rows ``-N..N``) fitted to ``samples``.

    Equispaced samples use the FFT: the interpolant of lowest frequency
    content when ``2*modes + 1 >= n`` (Nyquist mode split evenly), the
    truncated least-squares fit otherwise.  Arbitrary parameters fall back
    to a real least-squares fit of degree ``min(modes, (n-1)//2)``.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if params is None:
        spectrum = np.fft.fft(samples, axis=0) / n
        degree = min(modes, n // 2)
        coeffs = np.zeros((2 * degree + 1,) + samples.shape[1:], dtype=complex)
        for m in range(-degree, degree + 1):
            coeffs[m + degree] = spectrum[m % n]
        if n % 2 == 0 and degree == n // 2:
            coeffs[0] *= 0.5
            coeffs[-1] *= 0.5
        return coeffs, degree

    params = np.asarray(params, dtype=float)
    degree = min(modes, (n - 1) // 2)
    m = np.arange(1, degree + 1)
    basis = np.concatenate(
        [np.ones((n, 1)), np.cos(np.outer(params, m)), np.sin(np.outer(params, m))], axis=1
    )
    sol = np.linalg.lstsq(basis, samples.reshape(n, -1), rcond=None)[0]
    a0, a, b = sol[0], sol[1 : degree + 1], sol[degree + 1 :]
    coeffs = np.zeros((2 * degree + 1, sol.shape[1]), dtype=complex)
    coeffs[degree] = a0
    coeffs[degree + 1 :] = 0.5 * (a - 1j * b)
    coeffs[:degree] = (0.5 * (a + 1j * b))[::-1]
    return coeffs.reshape((2 * degree + 1,) + samples.shape[1:]), degree


def _check_closed(polygon):
    pts = np.asarray(polygon, dtype=float)
    scale = np.abs(pts - pts.mean(axis=0)).max()
    if np.linalg.norm(pts[-1] - pts[0]) > 1e-8 * max(scale, 1e-300):
        raise ValueError("polygon is not closed (first and last vertex differ)")
    pts = pts[:-1]
    if np.any(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1) <= 1e-14 * scale):
        raise ValueError("polygon has repeated vertices")
    return pts


def trig_interpolate(polygon, modes: int, params=None) -> SmoothBoundary:
    """Trigonometric interpolant of a closed polygon through its vertices.

    Parameters
    ----------
    polygon : array_like, shape (n+1, 2)
        Vertices with the first repeated at the end.
    modes : int
        Maximal degree ``N`` of the interpolant.
    params : array_like, optional
        Parameters in ``[0, 2 pi)`` of the first n vertices; equispaced if omitted.
    """
    pts = _check_closed(polygon)
    if params is not None and np.allclose(
        params, 2 * np.pi * np.arange(len(pts)) / len(pts), rtol=0, atol=1e-13
    ):
        params = None
    coeffs, degree = _trig_fit(pts, modes, params)
    boundary = SmoothBoundary(coeffs)
    _, _, dz, _ = boundary.nodes(max(4 * degree + 16, 64))
    speed = np.linalg.norm(dz, axis=1)
    if speed.min() <= 1e-8 * speed.max():
        raise ValueError("trigonometric interpolant is not a regular parameterization")
    return boundary


def interpolation_operator(n: int, modes: int, nodes: int, params=None):
    """Matrices mapping n vertex values to interpolant values and derivatives at nodes.

    Returns ``(T0, T1, T2)``, each of shape ``(nodes, n)``.
    """
    coeffs, degree = _trig_fit(np.eye(n), modes, params)
    s = 2 * np.pi * np.arange(nodes) / nodes
    m = np.arange(-degree, degree + 1)
    basis = np.exp(1j * np.outer(s, m))
    return tuple(((basis * (1j * m) ** d) @ coeffs).real for d in range(3))


# --------------------------------------------------------------------------
# Nyström discretization
# --------------------------------------------------------------------------


def _kress_weights(half: int) -> np.ndarray:
    """Weights ``R_k`` of the log-singular quadrature, ``k = (i - j) mod 2N``."""
    k = np.arange(2 * half)
    m = np.arange(1, half)
    r = -(2 * np.pi / half) * (np.cos(np.outer(k, m) * np.pi / half) / m).sum(axis=1)
    r -= (np.pi / half**2) * (-1.0) ** k
    return r


class NystromSolver:
    """Combined-layer Nyström solver for one boundary and configuration.

    Assembles and LU-factors the system matrix once; right-hand sides for
    all incident waves and all perturbation directions reuse the factors.
    """

    def __init__(self, boundary: SmoothBoundary, config: ScatterConfig):
        self.boundary = boundary
        self.config = config
        count = config.nystrom_points
        self.half = count // 2
        self.t, self.z, self.dz, self.ddz = boundary.nodes(count)
        self.speed = np.linalg.norm(self.dz, axis=1)
        if self.speed.min() <= 1e-10 * self.speed.max():
            raise ValueError("boundary is not regular at the Nyström nodes")
        # unnormalized outward normal nu |z'| for counter-clockwise curves
        self.normal_scaled = np.stack([self.dz[:, 1], -self.dz[:, 0]], axis=1)
        self.normal = self.normal_scaled / self.speed[:, None]
        self._assemble()
        self._lu = self._factor(self._matrix)

    def _assemble(self):
        k, eta, half = self.config.k, self.config.eta, self.half
        count = 2 * half
        z, dz, ddz, speed = self.z, self.dz, self.ddz, self.speed
        diff = z[:, None, :] - z[None, :, :]
        r = np.linalg.norm(diff, axis=-1)
        off = ~np.eye(count, dtype=bool)
        rr = np.where(off, r, 1.0)
        h0 = hankel1(0, k * rr)
        h1 = hankel1(1, k * rr)
        j0, j1 = h0.real, h1.real
        idx = np.arange(count)
        ti = self.t[:, None] - self.t[None, :]
        log_term = np.where(off, np.log(np.where(off, 4 * np.sin(ti / 2) ** 2, 1.0)), 0.0)
        weights = _kress_weights(half)[(idx[:, None] - idx[None, :]) % count]
        diag_l = (dz[:, 1] * ddz[:, 0] - dz[:, 0] * ddz[:, 1]) / (2 * np.pi * speed**2)

        # single layer, shared by both equations
        m_full = 0.5j * h0 * speed[None, :]
        m1 = -j0 * speed[None, :] / (2 * np.pi)
        m2 = m_full - m1 * log_term
        m1[idx, idx] = -speed / (2 * np.pi)
        m2[idx, idx] = (0.5j - EULER_GAMMA / np.pi - np.log(k * speed / 2) / np.pi) * speed

        # double layer: nu(tau)|z'(tau)| . (z(t) - z(tau))
        a = np.einsum("ijk,jk->ij", diff, self.normal_scaled)
        l_full = 0.5j * k * h1 / rr * a
        l1 = -k / (2 * np.pi) * j1 / rr * a
        l2 = l_full - l1 * log_term
        l1[idx, idx] = 0.0
        l2[idx, idx] = diag_l

        self._single = (m1, m2)
        self._adjoint_parts = (diff, h1, j1, rr, log_term, weights, diag_l)
        self._weights = weights
        eye = np.eye(count)
        self._matrix = eye + weights * (l1 - 1j * eta * m1) + (np.pi / half) * (l2 - 1j * eta * m2)

    @staticmethod
    def _factor(matrix):
        lu = scipy.linalg.lu_factor(matrix, check_finite=True)
        pivots = np.abs(np.diag(lu[0]))
        if pivots.min() <= 1e-14 * pivots.max():
            cond = np.linalg.cond(matrix)
            raise ForwardSolveError(
                f"Nyström matrix is numerically singular (condition {cond:.3g})", cond
            )
        return lu

    @cached_property
    def _adjoint_lu(self):
        k, eta, half = self.config.k, self.config.eta, self.half
        diff, h1, j1, rr, log_term, weights, diag_l = self._adjoint_parts
        idx = np.arange(2 * half)
        # nu(t)|z'(tau)| . (z(t) - z(tau))
        b = np.einsum("ijk,ik->ij", diff, self.normal) * self.speed[None, :]
        l_full = -0.5j * k * h1 / rr * b
        l1 = k / (2 * np.pi) * j1 / rr * b
        l2 = l_full - l1 * log_term
        l1[idx, idx] = 0.0
        l2[idx, idx] = diag_l
        m1, m2 = self._single
        matrix = (
            np.eye(2 * half)
            + weights * (l1 - 1j * eta * m1)
            + (np.pi / half) * (l2 - 1j * eta * m2)
        )
        return self._factor(matrix)

    def incident(self) -> np.ndarray:
        """Incident plane waves at the nodes, shape ``(2N, n_inc)``."""
        return np.exp(1j * self.config.k * self.z @ self.config.incident_dirs.T)

    def solve_density(self, rhs) -> np.ndarray:
        return scipy.linalg.lu_solve(self._lu, rhs)

    def far_field_of_density(self, density) -> np.ndarray:
        """Far field of the combined layer with the given node densities."""
        k, eta = self.config.k, self.config.eta
        xhat = self.config.measurement_dirs
        gamma = np.exp(1j * np.pi / 4) / np.sqrt(8 * np.pi * k)
        phase = np.exp(-1j * k * xhat @ self.z.T)
        kernel = (-1j * k * xhat @ self.normal_scaled.T - 1j * eta * self.speed[None, :]) * phase
        return gamma * (np.pi / self.half) * kernel @ density

    @cached_property
    def density(self) -> np.ndarray:
        return self.solve_density(-2.0 * self.incident())

    def far_field(self) -> FarField:
        values = self.far_field_of_density(self.density)
        if not np.all(np.isfinite(values)):
            raise ForwardSolveError("non-finite far field")
        return FarField(values, self.config.measurement_dirs, self.config.incident_dirs)

    @cached_property
    def normal_derivative(self) -> np.ndarray:
        """``du/dnu`` of the total field at the nodes, shape ``(2N, n_inc)``."""
        k, eta = self.config.k, self.config.eta
        ui = self.incident()
        dui = 1j * k * (self.normal @ self.config.incident_dirs.T) * ui
        return scipy.linalg.lu_solve(self._adjoint_lu, 2 * dui - 2j * eta * ui)

    def far_field_from_normal_derivative(self) -> np.ndarray:
        """Far field via Green's representation ``-gamma int e^{-ik xhat.y} du/dnu ds``."""
        k = self.config.k
        gamma = np.exp(1j * np.pi / 4) / np.sqrt(8 * np.pi * k)
        phase = np.exp(-1j * k * self.config.measurement_dirs @ self.z.T) * self.speed[None, :]
        return -gamma * (np.pi / self.half) * phase @ self.normal_derivative

    def perturbation_far_fields(self, normal_shift) -> np.ndarray:
        """Domain derivatives for boundary displacements with normal components ``normal_shift``.

        ``normal_shift`` has shape ``(2N, p)``; returns ``(n_meas, n_inc, p)``
        holding the far fields of the radiating solutions with Dirichlet data
        ``-normal_shift * du/dnu``.
        """
        normal_shift = np.asarray(normal_shift, dtype=float)
        dudn = self.normal_derivative
        count, n_inc = dudn.shape
        p = normal_shift.shape[1]
        data = -normal_shift[:, None, :] * dudn[:, :, None]
        dens = self.solve_density(2.0 * data.reshape(count, n_inc * p))
        ff = self.far_field_of_density(dens)
        return ff.reshape(ff.shape[0], n_inc, p)


def solve_forward(boundary: SmoothBoundary, config: ScatterConfig) -> FarField:
    """Far field of the sound-soft obstacle bounded by ``boundary`` for all incident waves."""
    return NystromSolver(boundary, config).far_field()


# --------------------------------------------------------------------------
# Shape-manifold forward map and derivatives
# --------------------------------------------------------------------------


def _vertex_params(m: ShapePoint):
    return 2 * np.pi * m.partition.tau[:-1]


def shape_boundary(m: ShapePoint, config: ScatterConfig, check_simple: bool = True) -> SmoothBoundary:
    polygon = reconstruct_polygon(m)
    if check_simple and not is_simple(polygon):
        raise SelfIntersectionError("far field is undefined for self-intersecting curves")
    params = None if m.partition.is_uniform else _vertex_params(m)
    return trig_interpolate(polygon, config.modes, params)


def far_field_map(m: ShapePoint, config: ScatterConfig) -> FarField:
    """Far field of the obstacle bounded by the polygon of ``m``."""
    return solve_forward(shape_boundary(m, config), config)


class _Linearization:
    def __init__(self, m: ShapePoint, config: ScatterConfig):
        self.solver = NystromSolver(shape_boundary(m, config), config)
        params = None if m.partition.is_uniform else _vertex_params(m)
        t0, _, _ = interpolation_operator(m.n, config.modes, config.nystrom_points, params)
        vj = vertex_jacobian(m)[:-1]  # (n, 2, n+3)
        shift_x = t0 @ vj[:, 0, :]
        shift_y = t0 @ vj[:, 1, :]
        normal = self.solver.normal
        # normal displacement at the nodes per ambient coordinate, (2N, n+3)
        self.normal_shift = normal[:, :1] * shift_x + normal[:, 1:] * shift_y


def domain_derivative(m: ShapePoint, config: ScatterConfig, h: TangentVector) -> FarField:
    """Directional derivative ``DF(m) h`` of the far-field map."""
    lin = _Linearization(m, config)
    direction = h.to_vector() if isinstance(h, TangentVector) else np.asarray(h, dtype=float)
    shift = lin.normal_shift @ direction
    values = lin.solver.perturbation_far_fields(shift[:, None])[..., 0]
    return FarField(values, config.measurement_dirs, config.incident_dirs)


def assemble_jacobian(m: ShapePoint, config: ScatterConfig, with_value: bool = False):
    """Jacobian of the stacked far field w.r.t. ambient coordinates.

    Returns an array of shape ``(n_meas * n_inc, n + 3)`` whose rows follow
    :meth:`FarField.vec` ordering; with ``with_value`` also the far field.
    """
    lin = _Linearization(m, config)
    cols = lin.solver.perturbation_far_fields(lin.normal_shift)
    jac = cols.reshape(-1, cols.shape[-1], order="F")
    if with_value:
        return lin.solver.far_field(), jac
    return jac


class ScatteringOperator:
    """Far-field forward operator on the shape manifold for a fixed configuration."""

    def __init__(self, config: ScatterConfig):
        self.config = config
        self.weight = config.weight

    def evaluate(self, m: ShapePoint) -> np.ndarray:
        return far_field_map(m, self.config).vec()

    def linearize(self, m: ShapePoint):
        value, jac = assemble_jacobian(m, self.config, with_value=True)
        return value.vec(), jac
