"""Discrete shape manifold of closed polygons in angle representation.

A closed polygon of length ``L`` with base point ``p`` is encoded by one
tangent angle per edge on a fixed partition ``0 = tau_0 < ... < tau_n = 1``
of the unit interval.  Edge ``i`` (1-based) spans ``(tau_{i-1}, tau_i]`` and
points in direction ``(cos theta_i, sin theta_i)``.  The polygon closes iff
the closure defect

    Phi(theta) = sum_i (tau_i - tau_{i-1}) (cos theta_i, sin theta_i)

vanishes.  Ambient coordinates of a shape point are stacked as the flat
vector ``[theta_1, ..., theta_n, L, p_x, p_y]``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import FeasibilityError, RankDeficiencyError

TWO_PI = 2.0 * np.pi

FEASIBILITY_TOL = 1e-10
MAX_RESTORE_ITER = 20
SCHUR_CONDITION_LIMIT = 1e12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Partition:
    """Strictly increasing parameter values ``tau_0 = 0 < ... < tau_n = 1``."""

    tau: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if tau.ndim != 1 or tau.size < 4:
            raise ValueError("partition needs at least 3 subintervals")
        if tau[0] != 0.0 or tau[-1] != 1.0:
            raise ValueError("partition must start at 0 and end at 1")
        if np.any(np.diff(tau) <= 0.0):
            raise ValueError("partition must be strictly increasing")
        object.__setattr__(self, "tau", _frozen(tau))

    @classmethod
    def uniform(cls, n: int) -> "Partition":
        tau = np.arange(n + 1, dtype=float) / n
        tau[-1] = 1.0
        return cls(tau)

    @property
    def n(self) -> int:
        return self.tau.size - 1

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        """Parameter lengths ``tau_i - tau_{i-1}`` of the n edges."""
        return _frozen(np.diff(self.tau))

    @cached_property
    def dual_lengths(self) -> np.ndarray:
        """``h_i = (tau_{i+1} - tau_{i-1}) / 2`` with ``tau_{n+1} = 1 + tau_1``."""
        d = self.edge_lengths
        return _frozen(0.5 * (d + np.roll(d, -1)))

    @cached_property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.edge_lengths, 1.0 / self.n, rtol=0, atol=1e-15))

    @cached_property
    def gram(self) -> np.ndarray:
        return h1_gram(self)

    @cached_property
    def _theta_gram_cholesky(self):
        n = self.n
        return scipy.linalg.cho_factor(self.gram[:n, :n])

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.tau.shape == other.tau.shape and bool(np.all(self.tau == other.tau))

    def __hash__(self):
        return hash(self.tau.tobytes())


@dataclass(frozen=True)
class Box:
    """Admissible lengths ``[L1, L2]`` and axis-aligned base point box ``B``."""

    length_min: float = 1e-6
    length_max: float = 1e6
    base_min: tuple = (-1e6, -1e6)
    base_max: tuple = (1e6, 1e6)

    def __post_init__(self):
        if not 0.0 < self.length_min <= self.length_max:
            raise ValueError("need 0 < length_min <= length_max")
        if any(lo > hi for lo, hi in zip(self.base_min, self.base_max)):
            raise ValueError("empty base point box")

    def clamp(self, length, base):
        length = float(np.clip(length, self.length_min, self.length_max))
        base = np.clip(base, self.base_min, self.base_max)
        return length, base


@dataclass(frozen=True, eq=False)
class TangentVector:
    dtheta: np.ndarray
    dlength: float = 0.0
    dbase: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "dtheta", _frozen(self.dtheta))
        object.__setattr__(self, "dlength", float(self.dlength))
        object.__setattr__(self, "dbase", _frozen(self.dbase))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.dtheta, [self.dlength], self.dbase])

    @classmethod
    def from_vector(cls, x) -> "TangentVector":
        x = np.asarray(x, dtype=float)
        return cls(x[:-3], x[-3], x[-2:])


@dataclass(frozen=True, eq=False)
class ShapePoint:
    """Point ``(theta, L, p)`` of the discrete shape manifold."""

    theta: np.ndarray
    length: float
    base: np.ndarray
    partition: Partition

    def __post_init__(self):
        theta = _frozen(self.theta)
        if theta.shape != (self.partition.n,):
            raise ValueError(
                f"theta has shape {theta.shape}, partition expects ({self.partition.n},)"
            )
        if not self.length > 0.0:
            raise ValueError("curve length must be positive")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "base", _frozen(self.base))

    @property
    def n(self) -> int:
        return self.partition.n

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.theta, [self.length], self.base])

    @classmethod
    def from_vector(cls, x, partition: Partition) -> "ShapePoint":
        x = np.asarray(x, dtype=float)
        return cls(x[:-3], x[-3], x[-2:], partition)

    def step(self, direction, t: float = 1.0) -> "ShapePoint":
        """Ambient update ``m + t*direction`` (not feasibility restored)."""
        if isinstance(direction, TangentVector):
            direction = direction.to_vector()
        return ShapePoint.from_vector(self.to_vector() + t * np.asarray(direction), self.partition)

    def replace(self, **changes) -> "ShapePoint":
        return dataclasses.replace(self, **changes)


# --------------------------------------------------------------------------
# Polygon reconstruction and closure constraint
# --------------------------------------------------------------------------


def _unit(theta):
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def reconstruct_polygon(m: ShapePoint) -> np.ndarray:
    """Vertices ``v_0 = p, ..., v_n`` of the polygon, shape ``(n+1, 2)``."""
    steps = m.length * m.partition.edge_lengths[:, None] * _unit(m.theta)
    vertices = np.empty((m.n + 1, 2))
    vertices[0] = m.base
    vertices[1:] = m.base + np.cumsum(steps, axis=0)
    return vertices


def closure_defect(m: ShapePoint) -> np.ndarray:
    return m.partition.edge_lengths @ _unit(m.theta)


def closure_jacobian(m: ShapePoint) -> np.ndarray:
    """``DPhi`` with respect to theta, shape ``(2, n)``."""
    w = m.partition.edge_lengths
    return np.stack([-w * np.sin(m.theta), w * np.cos(m.theta)])


def closure_hessians(m: ShapePoint) -> np.ndarray:
    """Diagonals of the second derivatives of both components of ``Phi``.

    ``D^2 Phi_1 = diag(-w cos theta)`` and ``D^2 Phi_2 = diag(-w sin theta)``;
    returned stacked with shape ``(2, n)``.
    """
    w = m.partition.edge_lengths
    return np.stack([-w * np.cos(m.theta), -w * np.sin(m.theta)])


def vertex_jacobian(m: ShapePoint) -> np.ndarray:
    """Derivative of the vertices w.r.t. ambient coordinates.

    Returns an array of shape ``(n+1, 2, n+3)`` where ``[j, :, c]`` is the
    velocity of vertex ``j`` along ambient coordinate ``c``.
    """
    n = m.n
    w = m.partition.edge_lengths
    perp = np.stack([-np.sin(m.theta), np.cos(m.theta)], axis=-1)
    jac = np.zeros((n + 1, 2, n + 3))
    # vertex j depends on theta_i (1-based) for i <= j
    lower = np.tril(np.ones((n, n)))
    jac[1:, :, :n] = m.length * lower[:, None, :] * (w[:, None] * perp).T[None, :, :]
    jac[1:, :, n] = np.cumsum(w[:, None] * _unit(m.theta), axis=0)
    jac[:, 0, n + 1] = 1.0
    jac[:, 1, n + 2] = 1.0
    return jac


def turning_angles(theta) -> np.ndarray:
    """``theta_{i+1} - theta_i`` (cyclic) shifted into ``(-pi, pi]``."""
    theta = np.asarray(theta, dtype=float)
    d = np.roll(theta, -1) - theta
    return d - TWO_PI * np.ceil((d - np.pi) / TWO_PI)


def turning_number(theta) -> int:
    return int(round(turning_angles(theta).sum() / TWO_PI))


# --------------------------------------------------------------------------
# Metric and constraint pseudo-inverse
# --------------------------------------------------------------------------


def h1_gram(partition: Partition) -> np.ndarray:
    """Gram matrix of the discrete H^1 inner product on ambient coordinates.

    The angle block is the edge-length mass matrix plus the cyclic
    finite-difference Laplacian whose turning-angle differences are
    weighted by ``1/h_i`` (the same stencil as the bending energy).  Length
    and base point contribute an identity block.
    """
    if not isinstance(partition, Partition):
        raise TypeError("h1_gram expects a Partition")
    n = partition.n
    w = partition.edge_lengths
    h = partition.dual_lengths
    diff = np.roll(np.eye(n), 1, axis=1) - np.eye(n)  # (D theta)_i = theta_{i+1} - theta_i
    gram = np.zeros((n + 3, n + 3))
    gram[:n, :n] = np.diag(w) + diff.T @ (diff / h[:, None])
    gram[n:, n:] = np.eye(3)
    return gram


def _constraint_factor(m: ShapePoint):
    """Return ``(Y, S)`` with ``Y = G^{-1} DPhi^T`` and Schur complement ``S = DPhi Y``."""
    jac = closure_jacobian(m)
    y = scipy.linalg.cho_solve(m.partition._theta_gram_cholesky, jac.T)
    schur = jac @ y
    cond = np.linalg.cond(schur)
    if not np.isfinite(cond) or cond > SCHUR_CONDITION_LIMIT:
        raise RankDeficiencyError(
            f"closure constraint is rank deficient (Schur condition {cond:.3g})", cond
        )
    return y, schur


def pseudo_inverse_matrix(m: ShapePoint) -> np.ndarray:
    """``DPhi^dagger`` restricted to the angle block, shape ``(n, 2)``.

    Moore-Penrose inverse with respect to the discrete H^1 metric, i.e. the
    solution operator of the bordered system ``[[G, DPhi^T], [DPhi, 0]]``.
    """
    y, schur = _constraint_factor(m)
    return np.linalg.solve(schur.T, y.T).T


def apply_pseudo_inverse(m: ShapePoint, v) -> TangentVector:
    """H^1-minimal-norm solution ``u`` of ``DPhi(m) u = v``."""
    v = np.asarray(v, dtype=float)
    y, schur = _constraint_factor(m)
    return TangentVector(y @ np.linalg.solve(schur, v))


def gauge_fix(theta) -> np.ndarray:
    """Shift all angles by a multiple of 2 pi so that ``theta_1`` lies in ``(-pi, pi]``."""
    theta = np.asarray(theta, dtype=float)
    k = np.ceil((theta[0] - np.pi) / TWO_PI)
    if k == 0:
        return theta
    return theta - TWO_PI * k


def restore_feasibility(
    x0: ShapePoint,
    tol: float = FEASIBILITY_TOL,
    max_iter: int = MAX_RESTORE_ITER,
    box: Box | None = None,
    history: list | None = None,
) -> ShapePoint:
    """Project ``x0`` back onto ``Phi = 0`` by ``x <- x - DPhi^dagger(x) Phi(x)``.

    Length and base point are clamped to ``box`` afterwards and the angles
    are gauge fixed.  When ``history`` is given, the defect norm of every
    iterate (starting with ``x0``) is appended to it.

    Raises
    ------
    FeasibilityError
        If ``max_iter`` corrections do not bring ``|Phi|`` below ``tol``.
    RankDeficiencyError
        If the constraint Jacobian degenerates along the way.
    """
    m = x0
    defect = np.linalg.norm(closure_defect(m))
    if history is not None:
        history.append(defect)
    iterations = 0
    while defect > tol:
        if iterations == max_iter or not np.isfinite(defect):
            raise FeasibilityError(
                f"feasibility restoration stalled at |Phi| = {defect:.3e} "
                f"after {iterations} iterations",
                defect,
            )
        correction = apply_pseudo_inverse(m, closure_defect(m))
        m = m.replace(theta=m.theta - correction.dtheta)
        defect = np.linalg.norm(closure_defect(m))
        iterations += 1
        if history is not None:
            history.append(defect)

    theta = gauge_fix(m.theta)
    length, base = m.length, m.base
    if box is not None:
        length, base = box.clamp(length, base)
    if (
        iterations == 0
        and theta is m.theta
        and length == m.length
        and np.array_equal(base, m.base)
    ):
        return x0
    return ShapePoint(theta, length, base, m.partition)


# --------------------------------------------------------------------------
# Embeddedness and distances
# --------------------------------------------------------------------------


def _open_ring(polygon) -> np.ndarray:
    pts = np.asarray(polygon, dtype=float)
    if len(pts) > 3 and np.allclose(pts[0], pts[-1], rtol=0, atol=1e-12 * (1 + np.abs(pts).max())):
        pts = pts[:-1]
    return pts


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
        c[..., 0] - a[..., 0]
    )


def _on_segment(a, b, c):
    # c known to be collinear with a-b
    return (
        (np.minimum(a[..., 0], b[..., 0]) <= c[..., 0])
        & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0]))
        & (np.minimum(a[..., 1], b[..., 1]) <= c[..., 1])
        & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1]))
    )


def is_simple(polygon) -> bool:
    """True iff no two non-adjacent closed edges of the closed polygon meet.

    ``polygon`` may repeat its first vertex at the end.
    """
    pts = _open_ring(polygon)
    n = len(pts)
    if n < 3:
        raise ValueError("a polygon needs at least 3 vertices")
    a = pts
    b = np.roll(pts, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    p1, p2, q1, q2 = a[i], b[i], a[j], b[j]
    o1 = _orient(p1, p2, q1)
    o2 = _orient(p1, p2, q2)
    o3 = _orient(q1, q2, p1)
    o4 = _orient(q1, q2, p2)
    proper = (np.sign(o1) * np.sign(o2) < 0) & (np.sign(o3) * np.sign(o4) < 0)
    touching = (
        ((o1 == 0) & _on_segment(p1, p2, q1))
        | ((o2 == 0) & _on_segment(p1, p2, q2))
        | ((o3 == 0) & _on_segment(q1, q2, p1))
        | ((o4 == 0) & _on_segment(q1, q2, p2))
    )
    return not bool(np.any(proper | touching))


def _point_segment_distances(points, polygon):
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    ab = b - a
    ap = points[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("psk,sk->ps", ap, ab) / np.einsum("sk,sk->s", ab, ab), 0.0, 1.0)
    nearest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(points[:, None, :] - nearest, axis=-1).min(axis=1)


def _densify(polygon, per_edge):
    b = np.roll(polygon, -1, axis=0)
    s = np.arange(per_edge) / per_edge
    return (polygon[:, None, :] + s[None, :, None] * (b - polygon)[:, None, :]).reshape(-1, 2)


def hausdorff_distance(poly_a, poly_b, per_edge: int = 8) -> float:
    """Hausdorff distance between two closed polygonal curves.

    Edges of each curve are subdivided ``per_edge`` times and the samples
    are measured exactly against the segments of the other curve.
    """
    a = _open_ring(poly_a)
    b = _open_ring(poly_b)
    d_ab = _point_segment_distances(_densify(a, per_edge), b).max()
    d_ba = _point_segment_distances(_densify(b, per_edge), a).max()
    return float(max(d_ab, d_ba))


def diameter(polygon) -> float:
    pts = _open_ring(polygon)
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(-1).max()))


def regular_polygon(n: int, length: float = TWO_PI, base=(0.0, 0.0)) -> ShapePoint:
    """Counter-clockwise regular n-gon with ``theta_i = 2 pi i / n``."""
    theta = TWO_PI * np.arange(1, n + 1) / n
    return ShapePoint(theta, length, np.asarray(base, dtype=float), Partition.uniform(n))
