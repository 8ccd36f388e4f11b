"""Bending and Möbius energies of discrete closed curves."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import (
    ShapePoint,
    closure_hessians,
    pseudo_inverse_matrix,
    turning_angles,
)

MOBIUS_COLLISION = 1e-12


@dataclass(frozen=True, eq=False)
class EnergyReport:
    """Energy value with its gradient over ``(theta, L, p)`` and angle Hessian."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {
                "value": self.value,
                "gradient_norm": float(np.linalg.norm(self.gradient)),
                "gradient": self.gradient.tolist(),
            }
        )


def _cyclic_difference(n):
    return np.roll(np.eye(n), 1, axis=1) - np.eye(n)


def bending_energy(m: ShapePoint, rest: ShapePoint | None = None) -> EnergyReport:
    """Scale-invariant discrete bending energy ``sum_i ([theta]_i - [theta*]_i)^2 / h_i``.

    With ``rest`` omitted the rest state is straight (zero turning angles).
    The branch shift of the turning angles is locally constant, so the
    derivatives are those of the plain cyclic differences.
    """
    if rest is not None and rest.partition != m.partition:
        raise ValueError("rest shape lives on a different partition")
    h = m.partition.dual_lengths
    excess = turning_angles(m.theta)
    if rest is not None:
        excess = excess - turning_angles(rest.theta)
    weighted = excess / h
    value = float(np.dot(excess, weighted))

    n = m.n
    grad = np.zeros(n + 3)
    # [theta]_i = theta_{i+1} - theta_i
    grad[:n] = 2.0 * (np.roll(weighted, 1) - weighted)
    diff = _cyclic_difference(n)
    hess = 2.0 * diff.T @ (diff / h[:, None])
    return EnergyReport(value, grad, hess)


def intrinsic_hessian(m: ShapePoint, energy_grad, energy_hess) -> np.ndarray:
    """Energy Hessian corrected by the second fundamental form of ``Phi = 0``.

    Computes ``D^2E - (DE DPhi^dagger) D^2Phi`` on the angle block; the
    row vector ``DE DPhi^dagger`` comes from the transposed bordered solve.
    ``energy_grad`` may be given over the angles only or over all ambient
    coordinates; the result has the size of ``energy_hess``.
    """
    n = m.n
    grad_theta = np.asarray(energy_grad, dtype=float)[:n]
    hess = np.array(energy_hess, dtype=float)
    multipliers = pseudo_inverse_matrix(m).T @ grad_theta
    second = closure_hessians(m)
    correction = np.diag(multipliers @ second)
    correction = 0.5 * (correction + correction.T)
    hess[:n, :n] -= correction
    return hess


def _polygon_ring(polygon):
    pts = np.asarray(polygon, dtype=float)
    if len(pts) > 3 and np.allclose(pts[0], pts[-1], rtol=0, atol=1e-12 * (1 + np.abs(pts).max())):
        pts = pts[:-1]
    return pts


def mobius_energy(polygon) -> float:
    """Vertex-pair discretization of the Möbius energy of a closed polygon.

    Sums ``(1/|x_i - x_j|^2 - 1/d(x_i, x_j)^2) l_i l_j`` over non-adjacent
    vertex pairs, where ``d`` is the shorter arc length along the polygon
    and ``l_i`` the dual edge length at vertex ``i``.  Returns ``inf`` when
    two non-adjacent vertices come closer than ``1e-12`` times the diameter.
    """
    x = _polygon_ring(polygon)
    n = len(x)
    if n < 3:
        raise ValueError("a polygon needs at least 3 vertices")
    edges = np.linalg.norm(np.roll(x, -1, axis=0) - x, axis=1)
    if np.any(edges == 0.0):
        raise ValueError("polygon has repeated consecutive vertices")
    total = edges.sum()
    dual = 0.5 * (edges + np.roll(edges, 1))
    # arclength position of each vertex
    s = np.concatenate([[0.0], np.cumsum(edges)[:-1]])
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    chord2 = ((x[i] - x[j]) ** 2).sum(axis=1)
    diam2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1).max()
    if np.any(chord2 < (MOBIUS_COLLISION**2) * diam2):
        return float("inf")
    arc = np.abs(s[j] - s[i])
    arc = np.minimum(arc, total - arc)
    terms = (1.0 / chord2 - 1.0 / arc**2) * dual[i] * dual[j]
    # fixed-order summation; factor 2 for the ordered pairs (j, i)
    return float(2.0 * np.sum(np.sort(terms)))
