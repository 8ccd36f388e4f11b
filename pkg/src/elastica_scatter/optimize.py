"""Tikhonov regularization on the discrete shape manifold.

The regularized functional is

    J(m) = 1/2 ||F(m) - y||^2 + alpha * P(m)

with ``P`` the bending energy relative to a rest shape (optionally plus
the Möbius energy as a self-avoidance barrier).  Each Gauss-Newton step
solves the bordered system

    [[H, C^T], [C, 0]] [u; mu] = [-DJ; 0]

where ``C = DPhi`` is the closure constraint Jacobian, followed by a
backtracking line search with feasibility restoration.  The outer loop
halves alpha until the residual drops below ``tau * delta``.

A forward operator is any object with

* ``weight``: quadrature weight of the data-space inner product,
* ``evaluate(m)``: flat data vector,
* ``linearize(m)``: ``(value, jacobian)`` with jacobian of shape
  ``(data, n + 3)`` over the ambient coordinates,
* optional ``requires_simple`` (default True): whether ``evaluate`` is
  undefined on self-intersecting curves.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .energy import bending_energy, intrinsic_hessian, mobius_energy
from .errors import (
    ConfigError,
    FeasibilityError,
    ForwardSolveError,
    RankDeficiencyError,
    SaddlePointError,
    SelfIntersectionError,
    StagnationError,
)
from .geometry import (
    FEASIBILITY_TOL,
    Box,
    ShapePoint,
    TangentVector,
    closure_defect,
    closure_jacobian,
    h1_gram,
    is_simple,
    reconstruct_polygon,
    restore_feasibility,
    vertex_jacobian,
)

logger = logging.getLogger(__name__)

PENALTIES = ("bending", "bending_plus_mobius")
HESSIAN_MODES = ("gauss_newton_intrinsic", "gradient_metric")
SADDLE_CONDITION_LIMIT = 1e14
# backtracks allowed along a Gauss-Newton step before switching to the gradient metric
GN_BACKTRACKS = 3
DAMPING_TRIES = 6


class ConvergenceWarning(UserWarning):
    """An inner or outer iteration ended without meeting its stopping rule."""


@dataclass(frozen=True, eq=False)
class TikhonovProblem:
    """Data, noise level, rest shape and penalty of one regularized inversion.

    ``data`` may be a :class:`~elastica_scatter.scatter.FarField` (stacked
    with its ``vec`` ordering) or a flat array in the forward operator's
    ordering.  ``noise_level`` is measured in the weighted data norm.
    """

    forward: object
    data: np.ndarray
    noise_level: float
    rest_shape: ShapePoint
    penalty: str = "bending"
    box: Box = field(default_factory=Box)

    def __post_init__(self):
        data = self.data.vec() if hasattr(self.data, "vec") else np.asarray(self.data)
        data = np.array(data).ravel()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if not self.noise_level >= 0:
            raise ConfigError(f"noise level must be nonnegative, got {self.noise_level}")
        if self.penalty not in PENALTIES:
            raise ConfigError(f"penalty must be one of {PENALTIES}, got {self.penalty!r}")

    @property
    def weight(self) -> float:
        return float(self.forward.weight)

    @property
    def requires_simple(self) -> bool:
        return bool(getattr(self.forward, "requires_simple", True))

    def data_norm(self, v) -> float:
        return float(np.sqrt(self.weight) * np.linalg.norm(v))

    def residual(self, m: ShapePoint) -> np.ndarray:
        value = np.asarray(self.forward.evaluate(m)).ravel()
        if value.shape != self.data.shape:
            raise ValueError(
                f"forward operator returned {value.size} values, data has {self.data.size}"
            )
        return value - self.data


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and strategy switches of the Gauss-Newton/discrepancy loop.

    ``alpha_initial=None`` selects the balanced default computed by
    :func:`default_alpha`.  ``alpha_floor`` is relative to the initial alpha.
    """

    gn_tolerance: float = 1e-5
    alpha_initial: float | None = None
    alpha_factor: float = 0.5
    discrepancy_factor: float = 1.1
    max_gn_iters: int = 50
    alpha_floor: float = 1e-14
    ls_shrink: float = 0.5
    ls_armijo: float = 1e-4
    ls_max_backtracks: int = 30
    hessian_mode: str = "gauss_newton_intrinsic"
    metric_shift: float = 1e-2
    restore_tol: float = FEASIBILITY_TOL
    mobius_fd_step: float = 1e-6

    def __post_init__(self):
        if not self.gn_tolerance > 0:
            raise ConfigError("gn_tolerance must be positive")
        if self.alpha_initial is not None and not self.alpha_initial > 0:
            raise ConfigError("alpha_initial must be positive")
        if not 0 < self.alpha_factor < 1:
            raise ConfigError("alpha_factor must lie in (0, 1)")
        if not self.discrepancy_factor > 1:
            raise ConfigError("discrepancy_factor must exceed 1")
        if self.max_gn_iters < 0 or self.ls_max_backtracks < 0:
            raise ConfigError("iteration limits must be nonnegative")
        if not 0 < self.ls_shrink < 1 or not 0 < self.ls_armijo < 1:
            raise ConfigError("line search constants must lie in (0, 1)")
        if not 0 < self.alpha_floor < 1:
            raise ConfigError("alpha_floor must lie in (0, 1)")
        if self.hessian_mode not in HESSIAN_MODES:
            raise ConfigError(f"hessian_mode must be one of {HESSIAN_MODES}")
        if self.metric_shift < 0:
            raise ConfigError("metric_shift must be nonnegative")
        if not self.restore_tol > 0 or not self.mobius_fd_step > 0:
            raise ConfigError("tolerances must be positive")


@dataclass
class IterationRecord:
    alpha: float
    iteration: int
    objective: float
    residual: float
    penalty: float
    step_norm: float
    gradient_norm: float
    step_length: float
    hessian_mode: str


@dataclass
class AlphaRecord:
    alpha: float
    iterations: int
    residual: float
    penalty: float
    gradient_norm: float
    converged: bool
    status: str
    snapshot: int


@dataclass
class RunTrace:
    """Per-iteration and per-alpha history of a regularized inversion."""

    iterations: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    status: str = "running"

    @property
    def converged(self) -> bool:
        return self.status == "discrepancy"

    def to_jsonl(self) -> str:
        lines = [json.dumps({"kind": "iteration", **asdict(r)}) for r in self.iterations]
        lines += [json.dumps({"kind": "alpha", **asdict(r)}) for r in self.alphas]
        lines.append(json.dumps({"kind": "status", "status": self.status}))
        return "\n".join(lines) + "\n"


@dataclass
class MinimizeResult:
    shape: ShapePoint
    converged: bool
    status: str
    iterations: int
    residual: float
    penalty: float
    gradient_norm: float
    records: list


# --------------------------------------------------------------------------
# Objective and derivatives
# --------------------------------------------------------------------------


def _mobius_of(m: ShapePoint) -> float:
    return mobius_energy(reconstruct_polygon(m)[:-1])


def mobius_gradient(m: ShapePoint, step: float = 1e-6) -> np.ndarray:
    """Möbius energy gradient over ambient coordinates by central differences.

    Differentiates with respect to vertex positions and chains with the
    vertex Jacobian; the relative step is scaled by the curve length.
    """
    verts = reconstruct_polygon(m)[:-1]
    h = step * m.length
    grad_v = np.zeros_like(verts)
    for i in range(len(verts)):
        for c in range(2):
            plus = verts.copy()
            minus = verts.copy()
            plus[i, c] += h
            minus[i, c] -= h
            grad_v[i, c] = (mobius_energy(plus) - mobius_energy(minus)) / (2 * h)
    jac = vertex_jacobian(m)[:-1]
    return np.einsum("ic,icj->j", grad_v, jac)


def penalty_value(problem: TikhonovProblem, m: ShapePoint) -> float:
    value = bending_energy(m, problem.rest_shape).value
    if problem.penalty == "bending_plus_mobius":
        value += _mobius_of(m)
    return value


def objective(problem: TikhonovProblem, m: ShapePoint, alpha: float) -> float:
    """``1/2 ||F(m) - y||^2 + alpha * P(m)``.

    Self-intersecting curves raise under the plain bending penalty (the
    far field is undefined) and give ``inf`` under the Möbius barrier.
    """
    if not is_simple(reconstruct_polygon(m)):
        if problem.penalty == "bending_plus_mobius":
            return float("inf")
        if problem.requires_simple:
            raise SelfIntersectionError("objective undefined on a self-intersecting curve")
    misfit = 0.5 * problem.data_norm(problem.residual(m)) ** 2
    if alpha == 0:
        return misfit
    return misfit + alpha * penalty_value(problem, m)


@dataclass
class _Local:
    """Objective value, gradient and Hessian pieces at one iterate."""

    residual: np.ndarray
    jacobian: np.ndarray
    misfit: float
    penalty: float
    data_gradient: np.ndarray
    penalty_gradient: np.ndarray
    penalty_hessian: np.ndarray

    def value(self, alpha):
        return self.misfit + alpha * self.penalty

    def gradient(self, alpha):
        return self.data_gradient + alpha * self.penalty_gradient


def _local_model(problem: TikhonovProblem, m: ShapePoint, settings: SolverSettings) -> _Local:
    value, jac = problem.forward.linearize(m)
    residual = np.asarray(value).ravel() - problem.data
    w = problem.weight
    report = bending_energy(m, problem.rest_shape)
    pen = report.value
    pen_grad = report.gradient.copy()
    if problem.penalty == "bending_plus_mobius":
        pen += _mobius_of(m)
        pen_grad += mobius_gradient(m, settings.mobius_fd_step)
    return _Local(
        residual=residual,
        jacobian=jac,
        misfit=0.5 * w * float(np.vdot(residual, residual).real),
        penalty=pen,
        data_gradient=w * np.real(jac.conj().T @ residual),
        penalty_gradient=pen_grad,
        penalty_hessian=report.hessian,
    )


def _bordered(m: ShapePoint, hess: np.ndarray):
    n = m.n
    cons = np.zeros((2, n + 3))
    cons[:, :n] = closure_jacobian(m)
    # unit row scaling of the constraint block; the solution u is unaffected
    cons /= np.linalg.norm(cons, axis=1, keepdims=True)
    size = n + 5
    mat = np.zeros((size, size))
    mat[: n + 3, : n + 3] = hess
    mat[: n + 3, n + 3 :] = cons.T
    mat[n + 3 :, : n + 3] = cons
    return mat, cons


def _inertia(mat) -> tuple:
    _, d, _ = scipy.linalg.ldl(mat)
    eig = np.linalg.eigvalsh(d)
    return int(np.sum(eig > 0)), int(np.sum(eig < 0))


def _solve_bordered(mat, rhs):
    scale = 1.0 / np.sqrt(np.maximum(np.abs(np.diag(mat)), 1e-300))
    scale[np.diag(mat) == 0] = 1.0
    scaled = mat * scale[:, None] * scale[None, :]
    cond = np.linalg.cond(scaled)
    if not np.isfinite(cond) or cond > SADDLE_CONDITION_LIMIT:
        raise SaddlePointError(
            f"bordered Gauss-Newton matrix is ill-conditioned (condition {cond:.3g}); "
            "increase alpha or use hessian_mode='gradient_metric'",
            cond,
        )
    sol = scipy.linalg.solve(scaled, scale * rhs, assume_a="sym")
    return scale * sol


def _hessian(problem, m, alpha, local: _Local, mode: str, damping=0.0) -> np.ndarray:
    n = m.n
    jac = local.jacobian
    hess = problem.weight * np.real(jac.conj().T @ jac)
    if mode == "gradient_metric":
        hess += alpha * h1_gram(m.partition)
    else:
        pen = intrinsic_hessian(m, local.penalty_gradient, local.penalty_hessian)
        hess[:n, :n] += alpha * pen
        hess += damping * h1_gram(m.partition)
    return 0.5 * (hess + hess.T)


def gauss_newton_step(
    problem: TikhonovProblem,
    m: ShapePoint,
    alpha: float,
    settings: SolverSettings | None = None,
    local: _Local | None = None,
):
    """Tangent Gauss-Newton direction ``u`` and closure multiplier ``mu``.

    In ``gauss_newton_intrinsic`` mode the Hessian is the Gauss-Newton
    data term plus alpha times the intrinsic penalty Hessian, shifted by
    ``alpha * metric_shift`` times the H^1 Gram matrix.  If that
    matrix is not positive definite on the tangent space (checked via the
    inertia of the bordered matrix) or the direction is not a descent
    direction, the step falls back to ``gradient_metric`` mode, whose
    Hessian adds ``alpha`` times the H^1 Gram matrix instead.

    Returns
    -------
    direction : TangentVector
    multiplier : ndarray, shape (2,)
        Multiplier of the unit-row-scaled closure constraint.
    """
    settings = settings or SolverSettings()
    if local is None:
        local = _local_model(problem, m, settings)
    step, mult, _ = _gn_direction(problem, m, alpha, settings, local)
    return TangentVector.from_vector(step), mult


def _gn_direction(problem, m, alpha, settings, local, mode=None, damping=None):
    n = m.n
    grad = local.gradient(alpha)
    rhs = np.concatenate([-grad, np.zeros(2)])
    modes = [mode or settings.hessian_mode]
    if modes[0] != "gradient_metric":
        modes.append("gradient_metric")
    error = None
    for mode in modes:
        if damping is None:
            damping = alpha * settings.metric_shift
        hess = _hessian(problem, m, alpha, local, mode, damping)
        mat, cons = _bordered(m, hess)
        if mode != "gradient_metric":
            if _inertia(mat) != (n + 3, 2):
                logger.debug("tangent Hessian not positive definite; using gradient metric")
                continue
        try:
            sol = _solve_bordered(mat, rhs)
        except SaddlePointError as exc:
            error = exc
            continue
        step = sol[: n + 3]
        if mode != "gradient_metric" and np.dot(grad, step) >= 0 and np.any(step):
            continue
        # remove rounding drift from the tangent space
        step -= cons.T @ np.linalg.solve(cons @ cons.T, cons @ step)
        return step, sol[n + 3 :], mode
    raise error if error is not None else SaddlePointError("no admissible Gauss-Newton step")


def _norms(m: ShapePoint, step, grad):
    """H^1 norm of the step and dual H^1 norm of the projected gradient."""
    gram = h1_gram(m.partition)
    mat, _ = _bordered(m, gram)
    rep = scipy.linalg.solve(mat, np.concatenate([grad, np.zeros(2)]), assume_a="sym")[: m.n + 3]
    return float(np.sqrt(max(step @ gram @ step, 0.0))), float(np.sqrt(max(rep @ gram @ rep, 0.0)))


# --------------------------------------------------------------------------
# Line search
# --------------------------------------------------------------------------


def _try_point(problem, m, u, t, alpha, settings):
    try:
        x = restore_feasibility(m.step(u, t), tol=settings.restore_tol, box=problem.box)
    except (FeasibilityError, RankDeficiencyError, ValueError):
        # ValueError: the trial length left the positive half-line
        return None, float("inf")
    if not is_simple(reconstruct_polygon(x)):
        return None, float("inf")
    try:
        value = objective(problem, x, alpha)
    except (ForwardSolveError, SelfIntersectionError, ValueError):
        return None, float("inf")
    return x, value


def _line_search(problem, m, alpha, u, value, slope, settings, max_backtracks=None):
    if not np.any(u):
        return m, 0.0, value
    if max_backtracks is None:
        max_backtracks = settings.ls_max_backtracks
    t = 1.0
    for _ in range(max_backtracks + 1):
        x, trial = _try_point(problem, m, u, t, alpha, settings)
        if x is not None and trial <= value + settings.ls_armijo * t * slope:
            return x, t, trial
        t *= settings.ls_shrink
    raise StagnationError(
        f"no acceptable step within {max_backtracks} backtracks (alpha={alpha:.3g})"
    )


def _search_with_fallback(problem, m, alpha, step, mode, local, settings, damping):
    """Line search along a Gauss-Newton step with adaptive damping.

    A Gauss-Newton step that needs more than a few backtracks is recomputed
    with ten times the metric damping (Levenberg-Marquardt style); after
    ``DAMPING_TRIES`` failures the gradient-metric step is used.  Returns
    ``(x, t, mode, damping)`` with the damping to start the next iteration.
    """
    value = local.value(alpha)
    grad = local.gradient(alpha)
    base = alpha * settings.metric_shift
    for attempt in range(DAMPING_TRIES):
        if mode == "gradient_metric":
            break
        if attempt > 0:
            damping *= 10.0
            step, _, mode = _gn_direction(problem, m, alpha, settings, local, damping=damping)
            if mode == "gradient_metric":
                break
        try:
            x, t, _ = _line_search(
                problem, m, alpha, step, value, float(np.dot(grad, step)), settings,
                max_backtracks=min(GN_BACKTRACKS, settings.ls_max_backtracks),
            )
        except StagnationError:
            continue
        if t == 1.0:
            damping = max(damping / 10.0, base)
        return x, t, mode, damping
    else:
        logger.debug("damped Gauss-Newton steps rejected; using the gradient metric")
        step, _, mode = _gn_direction(problem, m, alpha, settings, local, "gradient_metric")
    x, t, _ = _line_search(problem, m, alpha, step, value, float(np.dot(grad, step)), settings)
    return x, t, mode, damping


def line_search_and_restore(
    problem: TikhonovProblem,
    m: ShapePoint,
    alpha: float,
    u,
    settings: SolverSettings | None = None,
) -> ShapePoint:
    """Backtrack ``t = 1, 1/2, ...`` until the restored point passes Armijo and is simple.

    Raises
    ------
    StagnationError
        If no step length within the backtracking budget is acceptable.
    """
    settings = settings or SolverSettings()
    u = u.to_vector() if isinstance(u, TangentVector) else np.asarray(u, dtype=float)
    if not np.any(u):
        return m
    local = _local_model(problem, m, settings)
    slope = float(np.dot(local.gradient(alpha), u))
    x, _, _ = _line_search(problem, m, alpha, u, local.value(alpha), slope, settings)
    return x


# --------------------------------------------------------------------------
# Inner and outer loops
# --------------------------------------------------------------------------


def _check_iterate(x: ShapePoint, settings):
    defect = np.linalg.norm(closure_defect(x))
    if defect > settings.restore_tol:
        raise FeasibilityError(f"accepted iterate violates closure (|Phi| = {defect:.3e})", defect)
    if not is_simple(reconstruct_polygon(x)):
        raise SelfIntersectionError("accepted iterate is not simple")


def minimize_at_alpha(
    problem: TikhonovProblem,
    m0: ShapePoint,
    alpha: float,
    settings: SolverSettings | None = None,
) -> tuple:
    """Gauss-Newton iteration for fixed alpha.

    Stops when the H^1 norm of the step or the dual norm of the projected
    gradient falls below ``gn_tolerance``.  Stagnation and singular steps
    end the loop with the last iterate and ``converged=False``.

    Returns
    -------
    shape : ShapePoint
    result : MinimizeResult
    """
    settings = settings or SolverSettings()
    m = m0
    records = []
    status = "max_iterations"
    local = _local_model(problem, m, settings)
    grad_norm = float("nan")
    damping = alpha * settings.metric_shift
    iteration = 0
    for iteration in range(settings.max_gn_iters):
        try:
            step, _, mode = _gn_direction(problem, m, alpha, settings, local, damping=damping)
        except SaddlePointError as exc:
            logger.warning("%s", exc)
            status = "saddle_point_failure"
            break
        grad = local.gradient(alpha)
        step_norm, grad_norm = _norms(m, step, grad)
        if step_norm < settings.gn_tolerance or grad_norm < settings.gn_tolerance:
            status = "converged"
            break
        try:
            x, t, mode, damping = _search_with_fallback(
                problem, m, alpha, step, mode, local, settings, damping
            )
        except StagnationError as exc:
            logger.warning("%s", exc)
            status = "stagnation"
            break
        _check_iterate(x, settings)
        m = x
        local = _local_model(problem, m, settings)
        records.append(
            IterationRecord(
                alpha=alpha,
                iteration=iteration + 1,
                objective=local.value(alpha),
                residual=float(np.sqrt(2 * local.misfit)),
                penalty=local.penalty,
                step_norm=step_norm,
                gradient_norm=grad_norm,
                step_length=t,
                hessian_mode=mode,
            )
        )
        logger.debug(
            "alpha=%.3e it=%d J=%.6e residual=%.4e |u|=%.3e t=%g",
            alpha, iteration + 1, local.value(alpha), np.sqrt(2 * local.misfit), step_norm, t,
        )
    else:
        # iteration budget exhausted (or zero)
        grad_norm = _norms(m, np.zeros(m.n + 3), local.gradient(alpha))[1]
        if settings.max_gn_iters > 0 and grad_norm < settings.gn_tolerance:
            status = "converged"
    result = MinimizeResult(
        shape=m,
        converged=status == "converged",
        status=status,
        iterations=len(records),
        residual=float(np.sqrt(2 * local.misfit)),
        penalty=local.penalty,
        gradient_norm=grad_norm,
        records=records,
    )
    if not result.converged:
        warnings.warn(
            f"Gauss-Newton at alpha={alpha:.3g} ended with status {status}",
            ConvergenceWarning,
            stacklevel=2,
        )
    return m, result


def default_alpha(problem: TikhonovProblem, m0: ShapePoint) -> float:
    """Balance the initial misfit against the bending energy of ``m0``.

    ``1/2 ||F(m0) - y||^2 / max(E(m0, m_*), E(m0), 1e-8)``; the absolute
    energy ``E(m0)`` keeps the ratio finite when ``m0`` is the rest shape.
    """
    misfit = 0.5 * problem.data_norm(problem.residual(m0)) ** 2
    scale = max(
        bending_energy(m0, problem.rest_shape).value, bending_energy(m0).value, 1e-8
    )
    return max(misfit / scale, np.finfo(float).tiny)


def discrepancy_continuation(
    problem: TikhonovProblem,
    m0: ShapePoint,
    settings: SolverSettings | None = None,
) -> tuple:
    """Decrease alpha geometrically until ``||F(m_alpha) - y|| < tau * delta``.

    Each minimization is warm started from the previous minimizer.  The
    loop also ends (flagged, status ``alpha_floor``) once alpha would drop
    below ``alpha_floor * alpha_initial``.

    Returns
    -------
    shape : ShapePoint
    alpha : float
        The alpha of the returned shape (``0.0`` if ``m0`` already meets
        the discrepancy level).
    trace : RunTrace
    """
    settings = settings or SolverSettings()
    trace = RunTrace()
    target = settings.discrepancy_factor * problem.noise_level
    residual0 = problem.data_norm(problem.residual(m0))
    trace.snapshots.append(m0)
    if residual0 < target:
        trace.status = "discrepancy"
        logger.info("initial guess already meets the discrepancy level")
        return m0, 0.0, trace

    alpha0 = settings.alpha_initial or default_alpha(problem, m0)
    alpha = alpha0
    m = m0
    floor = settings.alpha_floor * alpha0
    while True:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            m, result = minimize_at_alpha(problem, m, alpha, settings)
        trace.iterations.extend(result.records)
        trace.snapshots.append(m)
        trace.alphas.append(
            AlphaRecord(
                alpha=alpha,
                iterations=result.iterations,
                residual=result.residual,
                penalty=result.penalty,
                gradient_norm=result.gradient_norm,
                converged=result.converged,
                status=result.status,
                snapshot=len(trace.snapshots) - 1,
            )
        )
        logger.info(
            "alpha=%.4e iterations=%d residual=%.4e (target %.4e) %s",
            alpha, result.iterations, result.residual, target, result.status,
        )
        if result.residual < target:
            trace.status = "discrepancy"
            return m, alpha, trace
        next_alpha = alpha * settings.alpha_factor
        if next_alpha < floor:
            trace.status = "alpha_floor"
            warnings.warn(
                f"alpha floor reached at alpha={alpha:.3g} with residual "
                f"{result.residual:.3g} >= {target:.3g}",
                ConvergenceWarning,
                stacklevel=2,
            )
            return m, alpha, trace
        alpha = next_alpha


def add_noise(y, relative_level: float, seed: int):
    """Add seeded complex Gaussian noise of exact relative norm ``relative_level``.

    Returns ``(y_delta, delta)`` with ``delta = relative_level * ||y||`` in
    the weighted data norm of ``y``.
    """
    if not relative_level >= 0:
        raise ValueError("relative noise level must be nonnegative")
    values = np.asarray(y.values)
    norm = y.norm()
    if relative_level == 0:
        return y, 0.0
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(values.shape) + 1j * rng.standard_normal(values.shape)
    delta = relative_level * norm
    noise *= delta / (np.sqrt(y.weight) * np.linalg.norm(noise))
    return type(y)(values + noise, y.measurement_dirs, y.incident_dirs), float(delta)
