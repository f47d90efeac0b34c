"""Cost, control laws, gradients, and the two optimality-system drivers.

Sign convention: with phi the backward adjoint (phi(T) = 0, unit source), the
Gateaux derivative of J in direction l is

    dJ(beta)[l] = int_{S_T} l * (2*beta - u*phi) ds dt,

so the pointwise stationarity law is ``beta = clamp(u*phi/2, m, M)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, GridMismatchError
from .fem1d import Mesh1D, integrate_nodal
from .model import ControlBox, ModelParams
from .pde_solvers import (
    BoundaryControl,
    FieldHistory,
    SchemeMode,
    adjoint_solve,
    forward_solve,
)

log = logging.getLogger(__name__)

__all__ = [
    "CostBreakdown",
    "OptimalityReport",
    "cost",
    "project_control",
    "project_constant_control",
    "gradient_direction",
    "directional_derivative",
    "constant_gradient",
    "forward_backward_sweep",
    "projected_gradient_descent",
    "constant_parameter_sweep",
    "STEP_FLOOR",
]

STEP_FLOOR = 1e-8


@dataclass(frozen=True)
class CostBreakdown:
    state_term: float
    control_term: float

    @property
    def total(self) -> float:
        return self.state_term + self.control_term

    def as_dict(self) -> dict:
        return {"state_term": self.state_term, "control_term": self.control_term, "total": self.total}


@dataclass
class OptimalityReport:
    control: BoundaryControl
    cost: CostBreakdown
    iterations: int
    control_residuals: list[float]
    cost_history: list[float]
    phi0_residual: float
    converged: bool
    status: str = "converged"
    driver: str = "sweep"
    state: FieldHistory | None = field(default=None, repr=False)
    adjoint: FieldHistory | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        ctrl = self.control
        out = {
            "driver": self.driver,
            "status": self.status,
            "converged": self.converged,
            "iterations": self.iterations,
            "control_kind": ctrl.kind,
            "cost": self.cost.as_dict(),
            "control_residuals": list(map(float, self.control_residuals)),
            "cost_history": list(map(float, self.cost_history)),
            "phi0_residual": self.phi0_residual,
        }
        if ctrl.kind == "constant":
            out["beta_constant"] = ctrl.constant_value
        return out


def _trapezoid_time(values: np.ndarray, dt: float) -> float:
    values = np.asarray(values, dtype=float)
    return float(dt * (values.sum(axis=0) - 0.5 * (values[0] + values[-1])))


def cost(p: ModelParams, beta: BoundaryControl, u: FieldHistory) -> CostBreakdown:
    """Evaluate J by the trapezoid rule in space and time.

    Trajectory controls: ``int_Q u + int_S beta^2``.  Constant controls use
    the time-free functional ``int_Omega u(T) dx + beta^2``.
    """
    if beta.n_levels != u.n_levels or u.n_levels != p.n_levels or u.mesh.n_elements != p.n_elements:
        raise GridMismatchError("cost: control, state and parameters disagree on the grid")
    if beta.kind == "constant":
        return CostBreakdown(float(integrate_nodal(u.mesh, u.final)), beta.constant_value**2)
    state = _trapezoid_time(integrate_nodal(u.mesh, u.levels), u.dt)
    control = _trapezoid_time(beta.left**2 + beta.right**2, u.dt)
    return CostBreakdown(state, control)


def _check_pair(u: FieldHistory, phi: FieldHistory):
    if not u.same_grid(phi):
        raise GridMismatchError("state and adjoint live on different grids")


def project_control(u: FieldHistory, phi: FieldHistory, box: ControlBox) -> BoundaryControl:
    """Pointwise law ``beta = min(max(u*phi/2, m), M)`` on both boundary points."""
    _check_pair(u, phi)
    left = box.clamp(0.5 * u.left * phi.left)
    right = box.clamp(0.5 * u.right * phi.right)
    return BoundaryControl.trajectory(left, right)


def project_constant_control(mesh: Mesh1D, u: FieldHistory, phi: FieldHistory, box: ControlBox,
                             time_reduction: str = "final") -> float:
    """Constant-coefficient law ``clamp(1/2 * int_{dOmega} u*phi ds, m, M)``.

    The boundary integral (sum over x = 0 and x = 1) is reduced in time by
    ``time_reduction``: ``"final"`` takes the last level, ``"mean"`` the
    time average, ``"integral"`` the full trapezoid integral over (0, T).
    The last one is the exact stationarity condition when ``phi`` is the
    adjoint of ``int_Omega u(T) dx`` (terminal data 1, no source).
    """
    _check_pair(u, phi)
    if u.mesh != mesh:
        raise GridMismatchError("mesh does not match the field histories")
    boundary = u.left * phi.left + u.right * phi.right
    if time_reduction == "final":
        value = boundary[-1]
    elif time_reduction == "integral":
        value = _trapezoid_time(boundary, u.dt)
    elif time_reduction == "mean":
        value = _trapezoid_time(boundary, u.dt) / (u.dt * (u.n_levels - 1))
    else:
        raise ValueError(f"unknown time_reduction {time_reduction!r}")
    return float(box.clamp(0.5 * value))


def gradient_direction(beta: BoundaryControl, u: FieldHistory, phi: FieldHistory) -> np.ndarray:
    """Gradient density ``2*beta - u*phi`` of J, shape (n_levels, 2) for x = 0, 1."""
    _check_pair(u, phi)
    if beta.n_levels != u.n_levels:
        raise GridMismatchError("control and fields have different level counts")
    return np.column_stack([2.0 * beta.left - u.left * phi.left,
                            2.0 * beta.right - u.right * phi.right])


def directional_derivative(gradient: np.ndarray, direction: BoundaryControl, dt: float) -> float:
    """``int_{S_T} l * g ds dt`` with the trapezoid rule in time."""
    return _trapezoid_time((gradient * direction.as_array()).sum(axis=1), dt)


def constant_gradient(beta_value: float, u: FieldHistory, p_terminal: FieldHistory) -> float:
    """dJ/dbeta for the constant functional: ``2*beta - int_0^T int_{dOmega} u*p ds dt``."""
    _check_pair(u, p_terminal)
    boundary = u.left * p_terminal.left + u.right * p_terminal.right
    return 2.0 * beta_value - _trapezoid_time(boundary, u.dt)


def _solve_pair(p, beta, mode, iteration):
    """State and the adjoint used for control updates.

    Consistent mode uses the exact discrete adjoint so both drivers share one
    fixed point with the discrete cost; the paper-faithful scheme has no discrete
    adjoint and uses its own recurrences.
    """
    try:
        u = forward_solve(p, beta, mode)
        phi = adjoint_solve(p, beta, u, mode, discrete=mode is SchemeMode.CONSISTENT_GALERKIN)
    except DivergenceError as exc:
        exc.iteration = iteration
        exc.args = (f"{exc.args[0]} (driver iteration {iteration})",)
        raise
    return u, phi


def _final_fields(p, beta, mode, iteration):
    """State and continuous adjoint (phi(T) = 0) reported for the final control."""
    try:
        u = forward_solve(p, beta, mode)
        return u, adjoint_solve(p, beta, u, mode)
    except DivergenceError as exc:
        exc.iteration = iteration
        raise


def _check_start(p: ModelParams, beta0: BoundaryControl):
    box = p.box
    arr = beta0.as_array()
    if np.any(arr < box.m) or np.any(arr > box.M):
        raise ValueError("initial control must lie in the control box")
    if beta0.n_levels != p.n_levels:
        raise GridMismatchError("initial control does not match the time grid")


def forward_backward_sweep(p: ModelParams, beta0: BoundaryControl, mode=SchemeMode.CONSISTENT_GALERKIN,
                           tol: float = 1e-6, max_iter: int = 200, relaxation: float = 0.5) -> OptimalityReport:
    """Damped fixed-point iteration on state, adjoint and projection.

    ``beta <- (1 - relaxation)*beta + relaxation*project_control(u(beta), phi(beta))``
    until the sup-norm update is at most ``tol``.
    """
    if not 0 < relaxation <= 1:
        raise ValueError("relaxation must lie in (0, 1]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_start(p, beta0)
    mode = SchemeMode.parse(mode)
    beta = BoundaryControl.trajectory(beta0.left, beta0.right)
    residuals, costs = [], []
    converged = False
    iterations = 0
    for k in range(max_iter):
        u, phi = _solve_pair(p, beta, mode, k)
        costs.append(cost(p, beta, u).total)
        target = project_control(u, phi, p.box)
        new = BoundaryControl.trajectory(
            p.box.clamp((1 - relaxation) * beta.left + relaxation * target.left),
            p.box.clamp((1 - relaxation) * beta.right + relaxation * target.right),
        )
        residuals.append(new.sup_distance(beta))
        beta = new
        iterations = k + 1
        log.debug("sweep iteration %d: J=%.12g residual=%.3e", k, costs[-1], residuals[-1])
        if residuals[-1] <= tol:
            converged = True
            break
    u, phi = _final_fields(p, beta, mode, iterations)
    return OptimalityReport(
        control=beta,
        cost=cost(p, beta, u),
        iterations=iterations,
        control_residuals=residuals,
        cost_history=costs,
        phi0_residual=float(np.max(np.abs(phi[0]))),
        converged=converged,
        status="converged" if converged else "max_iter",
        driver="sweep",
        state=u,
        adjoint=phi,
    )


def projected_gradient_descent(p: ModelParams, beta0: BoundaryControl, mode=SchemeMode.CONSISTENT_GALERKIN,
                               step: float = 0.5, tol: float = 1e-6, max_iter: int = 200) -> OptimalityReport:
    """Projected gradient with step halving on cost increase.

    Stops when ``sup |beta - clamp(beta - g)|`` is at most ``tol``.  If the
    step falls below ``STEP_FLOOR`` without a decrease the run ends with
    status ``"stagnated"``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    _check_start(p, beta0)
    mode = SchemeMode.parse(mode)
    box = p.box
    beta = BoundaryControl.trajectory(beta0.left, beta0.right)
    u, phi = _solve_pair(p, beta, mode, 0)
    J = cost(p, beta, u).total
    costs, residuals = [J], []
    accepted = 0
    status = "max_iter"
    for k in range(max_iter + 1):
        g = gradient_direction(beta, u, phi)
        b = beta.as_array()
        pg = float(np.max(np.abs(b - box.clamp(b - g))))
        log.debug("pgd iteration %d: J=%.12g projected gradient=%.3e", k, J, pg)
        if pg <= tol:
            status = "converged"
            break
        if k == max_iter:
            break
        s = step
        while True:
            trial_arr = box.clamp(b - s * g)
            trial = BoundaryControl.trajectory(trial_arr[:, 0], trial_arr[:, 1])
            u_t, phi_t = _solve_pair(p, trial, mode, k + 1)
            J_t = cost(p, trial, u_t).total
            # tolerate round-off-level increases only
            if J_t <= J + 1e-14 * abs(J):
                break
            s *= 0.5
            if s < STEP_FLOOR:
                status = "stagnated"
                break
        if status == "stagnated":
            break
        residuals.append(trial.sup_distance(beta))
        beta, u, phi, J = trial, u_t, phi_t, J_t
        costs.append(J)
        accepted += 1
    u, phi = _final_fields(p, beta, mode, accepted)
    return OptimalityReport(
        control=beta,
        cost=cost(p, beta, u),
        iterations=accepted,
        control_residuals=residuals,
        cost_history=costs,
        phi0_residual=float(np.max(np.abs(phi[0]))),
        converged=status == "converged",
        status=status,
        driver="projected_gradient",
        state=u,
        adjoint=phi,
    )


def constant_parameter_sweep(p: ModelParams, beta0: float, mode=SchemeMode.CONSISTENT_GALERKIN,
                             tol: float = 1e-6, max_iter: int = 200, relaxation: float = 0.5,
                             time_reduction: str = "integral") -> OptimalityReport:
    """Fixed-point iteration for a single constant coefficient minimising
    ``int_Omega u(T) dx + beta^2``.

    Uses the adjoint with terminal data 1 and no source, then
    :func:`project_constant_control`.
    """
    if not 0 < relaxation <= 1:
        raise ValueError("relaxation must lie in (0, 1]")
    if not p.box.m <= beta0 <= p.box.M:
        raise ValueError("initial control must lie in the control box")
    mode = SchemeMode.parse(mode)
    mesh = p.mesh()
    value = float(beta0)
    residuals, costs = [], []
    converged = False
    iterations = 0
    for k in range(max_iter):
        beta = BoundaryControl.constant(value, p.n_levels)
        try:
            u = forward_solve(p, beta, mode)
            adj = adjoint_solve(p, beta, u, mode, source=0.0, terminal=1.0,
                                discrete=mode is SchemeMode.CONSISTENT_GALERKIN)
        except DivergenceError as exc:
            exc.iteration = k
            raise
        costs.append(cost(p, beta, u).total)
        target = project_constant_control(mesh, u, adj, p.box, time_reduction)
        new = float(p.box.clamp((1 - relaxation) * value + relaxation * target))
        residuals.append(abs(new - value))
        value = new
        iterations = k + 1
        if residuals[-1] <= tol:
            converged = True
            break
    beta = BoundaryControl.constant(value, p.n_levels)
    u = forward_solve(p, beta, mode)
    adj = adjoint_solve(p, beta, u, mode, source=0.0, terminal=1.0,
                        discrete=mode is SchemeMode.CONSISTENT_GALERKIN)
    return OptimalityReport(
        control=beta,
        cost=cost(p, beta, u),
        iterations=iterations,
        control_residuals=residuals,
        cost_history=costs,
        phi0_residual=float(np.max(np.abs(adj[0]))),
        converged=converged,
        status="converged" if converged else "max_iter",
        driver="constant_beta",
        state=u,
        adjoint=adj,
    )
