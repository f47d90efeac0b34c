"""Backward Euler / P1 Galerkin time stepping for state, adjoint and sensitivity.

Two assembly modes are provided:

``consistent_galerkin``
    Full nodal system on x_0..x_N, consistent mass matrix, Robin terms as
    ``tau * beta`` on the two boundary diagonal entries, nonlocal source
    distributed to every node by trapezoid quadrature.

``paper_faithful``
    The hand-eliminated recurrences for the unknowns x_0..x_{N-1}: ghost node
    ``alpha_{-1} = alpha_1 + (h*beta + 1) * alpha_0`` on the left,
    ``alpha_N = alpha_{N-1} / (1 + beta*h)`` on the right, half-weighted Robin
    term on row 0 and the nonlocal source lumped into row 0 only.  Kept
    verbatim for reproduction; it is not a consistent discretisation near
    x = 0 (see ``diagnostics.scheme_cross_check``).

In both modes the nonlocal term is taken explicitly from the previous level;
each step is one tridiagonal solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, DivergenceError, GridMismatchError, SingularSystemError
from .fem1d import (
    Mesh1D,
    Tridiagonal,
    assemble_mass,
    assemble_stiffness,
    quadrature_weights,
    thomas_solve,
)
from .model import ModelParams, validate_params

__all__ = [
    "SchemeMode",
    "FieldHistory",
    "BoundaryControl",
    "forward_solve",
    "adjoint_solve",
    "sensitivity_solve",
    "paper_forward_rows",
    "paper_adjoint_rows",
    "consistent_step_matrix",
    "DIVERGENCE_THRESHOLD",
]

DIVERGENCE_THRESHOLD = 1e12


class SchemeMode(str, Enum):
    PAPER_FAITHFUL = "paper_faithful"
    CONSISTENT_GALERKIN = "consistent_galerkin"

    @classmethod
    def parse(cls, value) -> "SchemeMode":
        if isinstance(value, cls):
            return value
        aliases = {"paper": cls.PAPER_FAITHFUL, "consistent": cls.CONSISTENT_GALERKIN}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown scheme mode {value!r}; use 'paper' or 'consistent'") from None


@dataclass(frozen=True)
class FieldHistory:
    """Nodal coefficients of a space-time field, one row per level t_n = n*dt."""

    levels: np.ndarray
    dt: float
    mesh: Mesh1D

    def __post_init__(self):
        levels = np.array(self.levels, dtype=float)
        if levels.ndim != 2 or levels.shape[1] != self.mesh.n_nodes:
            raise GridMismatchError(f"levels shape {levels.shape} does not match mesh with {self.mesh.n_nodes} nodes")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @property
    def n_levels(self) -> int:
        return self.levels.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_levels)

    @property
    def final(self) -> np.ndarray:
        return self.levels[-1]

    @property
    def left(self) -> np.ndarray:
        return self.levels[:, 0]

    @property
    def right(self) -> np.ndarray:
        return self.levels[:, -1]

    def __getitem__(self, n):
        return self.levels[n]

    def same_grid(self, other: "FieldHistory") -> bool:
        return (self.mesh == other.mesh and self.n_levels == other.n_levels
                and abs(self.dt - other.dt) <= 1e-12 * self.dt)


@dataclass(frozen=True)
class BoundaryControl:
    """Heat-transfer coefficient at x = 0 (``left``) and x = 1 (``right``) per level.

    ``kind == "constant"`` stores one value for the whole boundary and horizon;
    ``left``/``right`` are then filled with it so solvers never special-case it.
    """

    kind: str
    left: np.ndarray
    right: np.ndarray
    constant_value: float | None = None

    def __post_init__(self):
        if self.kind not in ("trajectory", "constant"):
            raise ValueError(f"unknown control kind {self.kind!r}")
        left = np.array(self.left, dtype=float)
        right = np.array(self.right, dtype=float)
        if left.shape != right.shape or left.ndim != 1:
            raise GridMismatchError("left and right control series must have equal 1-D shapes")
        if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
            raise ValueError("control values must be finite")
        left.setflags(write=False)
        right.setflags(write=False)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @classmethod
    def constant(cls, value: float, n_levels: int) -> "BoundaryControl":
        v = float(value)
        return cls("constant", np.full(n_levels, v), np.full(n_levels, v), v)

    @classmethod
    def trajectory(cls, left, right=None) -> "BoundaryControl":
        left = np.asarray(left, dtype=float)
        return cls("trajectory", left, left if right is None else right)

    @classmethod
    def uniform(cls, value: float, n_levels: int) -> "BoundaryControl":
        """Trajectory-kind control holding ``value`` everywhere."""
        return cls.trajectory(np.full(n_levels, float(value)))

    @property
    def n_levels(self) -> int:
        return self.left.size

    def as_array(self) -> np.ndarray:
        """Shape (n_levels, 2): columns are x = 0 and x = 1."""
        return np.column_stack([self.left, self.right])

    def sup_distance(self, other: "BoundaryControl") -> float:
        return float(np.max(np.abs(self.as_array() - other.as_array())))

    def perturbed(self, direction: "BoundaryControl", eps: float) -> "BoundaryControl":
        if self.kind == "constant" and direction.kind == "constant":
            return BoundaryControl.constant(self.constant_value + eps * direction.constant_value, self.n_levels)
        return BoundaryControl.trajectory(self.left + eps * direction.left, self.right + eps * direction.right)


def _check_inputs(p: ModelParams, *controls: BoundaryControl) -> Mesh1D:
    violations = validate_params(p)
    if violations:
        raise ConfigurationError("invalid model parameters: " + "; ".join(violations))
    for c in controls:
        if c.n_levels != p.n_levels:
            raise GridMismatchError(f"control has {c.n_levels} levels, time grid has {p.n_levels}")
    return p.mesh()


def _check_history(p: ModelParams, mesh: Mesh1D, *fields: FieldHistory):
    for fh in fields:
        if fh.mesh != mesh or fh.n_levels != p.n_levels or abs(fh.dt - p.time_step) > 1e-12 * p.time_step:
            raise GridMismatchError("field history does not live on the parameter grid")


def _guard(values: np.ndarray, level: int, what: str):
    if not np.all(np.isfinite(values)) or np.max(np.abs(values)) > DIVERGENCE_THRESHOLD:
        raise DivergenceError(f"{what} diverged at time level {level}", level=level)


def _solve(t: Tridiagonal, rhs, level: int, what: str) -> np.ndarray:
    try:
        return thomas_solve(t, rhs)
    except SingularSystemError as exc:
        raise SingularSystemError(f"{what}: singular step system at time level {level} ({exc})",
                                  row=exc.row, level=level) from exc


# ---------------------------------------------------------------------------
# consistent Galerkin pieces


def consistent_step_matrix(mesh: Mesh1D, tau: float, beta_left: float, beta_right: float,
                           mass: Tridiagonal | None = None,
                           stiffness: Tridiagonal | None = None) -> Tridiagonal:
    """``A + tau*B + tau*diag(beta_left, 0, ..., 0, beta_right)``."""
    mass = assemble_mass(mesh) if mass is None else mass
    stiffness = assemble_stiffness(mesh) if stiffness is None else stiffness
    robin = np.zeros(mesh.n_nodes)
    robin[0], robin[-1] = tau * beta_left, tau * beta_right
    return (mass + tau * stiffness).add_to_diagonal(robin)


def _nonlocal_source(p: ModelParams, w: np.ndarray, u: np.ndarray) -> np.ndarray:
    fu = p.conductivity.eval(u)
    total = w @ fu
    return p.lam * w * fu / total**2


def _nonlocal_linearization(p: ModelParams, w: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Derivative of the lumped source at ``u`` in direction ``v``."""
    fu = p.conductivity.eval(u)
    dfu = p.conductivity.deriv(u)
    total = w @ fu
    return p.lam * w * (dfu * v / total**2 - 2.0 * fu * (w @ (dfu * v)) / total**3)


def _nonlocal_adjoint_load(p: ModelParams, w: np.ndarray, u: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Transpose of ``_nonlocal_linearization`` applied to ``phi``."""
    fu = p.conductivity.eval(u)
    dfu = p.conductivity.deriv(u)
    total = w @ fu
    return p.lam * w * dfu * (phi / total**2 - 2.0 * (w @ (fu * phi)) / total**3)


# ---------------------------------------------------------------------------
# paper-faithful pieces


def paper_forward_rows(mesh: Mesh1D, tau: float, beta_left: float, beta_right: float):
    """Left- and right-hand matrices of the hand-eliminated state recurrences.

    Both act on the unknowns alpha_0..alpha_{N-1}; alpha_N is recovered as
    ``alpha_{N-1} / (1 + beta_right*h)``.  Row 0 omits the source term, which
    is added by :func:`paper_source`.
    """
    h, n = mesh.h, mesh.n_elements
    a = h / 6.0 - tau / h
    b = 2.0 * h / 3.0 + 2.0 * tau / h
    sub = np.full(n - 1, a)
    diag = np.full(n, b)
    sup = np.full(n - 1, a)
    diag[0] = a * (1.0 + h * beta_left) + b + tau * beta_left / 2.0
    sup[0] = 2.0 * a
    diag[-1] = b + a / (1.0 + beta_right * h)
    lhs = Tridiagonal(sub, diag, sup)

    rsub = np.full(n - 1, h / 6.0)
    rdiag = np.full(n, 2.0 * h / 3.0)
    rsup = np.full(n - 1, h / 6.0)
    rdiag[0] = h / 6.0 * (5.0 + h * beta_left)
    rsup[0] = h / 3.0
    rdiag[-1] = 2.0 * h / 3.0 * (1.0 + 1.0 / (4.0 * (1.0 + beta_right * h)))
    rhs = Tridiagonal(rsub, rdiag, rsup)
    return lhs, rhs


def paper_source(p: ModelParams, u: np.ndarray, tau: float) -> float:
    """Row-0 source ``2*lam*tau*f(u_0) / (f(u_0) + f(u_N))**2``."""
    f0, fN = p.conductivity.eval(np.array([u[0], u[-1]]))
    return 2.0 * p.lam * tau * f0 / (f0 + fN) ** 2


def paper_adjoint_rows(mesh: Mesh1D, tau: float, beta_left: float, beta_right: float):
    """Coefficient matrices of the hand-eliminated adjoint recurrences (source-free part).

    Returns ``(known, unknown)``: ``known`` carries the ``c``/``d`` entries
    multiplying the later level, ``unknown`` the (positive) mass rows of the
    earlier level, so one backward step reads
    ``unknown @ mu^n = tau*h - known @ mu^{n+1} + (row-0 corrections)``.
    """
    h, n = mesh.h, mesh.n_elements
    c = -h / 6.0 - tau / h
    d = -2.0 * h / 3.0 + 2.0 * tau / h
    sub = np.full(n - 1, c)
    diag = np.full(n, d)
    sup = np.full(n - 1, c)
    diag[0] = c * (1.0 + h * beta_left) + d + tau * beta_left / 2.0
    sup[0] = 2.0 * c
    diag[-1] = d + c / (1.0 + beta_right * h)
    known = Tridiagonal(sub, diag, sup)
    _, unknown = paper_forward_rows(mesh, tau, beta_left, beta_right)
    return known, unknown


# ---------------------------------------------------------------------------
# solvers


def forward_solve(p: ModelParams, beta: BoundaryControl, mode=SchemeMode.CONSISTENT_GALERKIN) -> FieldHistory:
    """March the state from u(0) = u0 to t = T.

    Step n -> n+1 uses the control at level n+1 in the implicit Robin terms
    and the nonlocal source evaluated at level n.
    """
    mode = SchemeMode.parse(mode)
    mesh = _check_inputs(p, beta)
    tau = p.time_step
    U = np.empty((p.n_levels, mesh.n_nodes))
    U[0] = p.initial_temperature
    _guard(U[0], 0, "state")

    if mode is SchemeMode.CONSISTENT_GALERKIN:
        A, B = assemble_mass(mesh), assemble_stiffness(mesh)
        w = quadrature_weights(mesh)
        for n in range(p.n_steps):
            lhs = consistent_step_matrix(mesh, tau, beta.left[n + 1], beta.right[n + 1], A, B)
            rhs = A.matvec(U[n]) + tau * _nonlocal_source(p, w, U[n])
            U[n + 1] = _solve(lhs, rhs, n + 1, "state")
            _guard(U[n + 1], n + 1, "state")
    else:
        h = mesh.h
        for n in range(p.n_steps):
            bl, br = beta.left[n + 1], beta.right[n + 1]
            lhs, rmat = paper_forward_rows(mesh, tau, bl, br)
            rhs = rmat.matvec(U[n, :-1])
            rhs[0] += paper_source(p, U[n], tau)
            inner = _solve(lhs, rhs, n + 1, "state")
            U[n + 1, :-1] = inner
            U[n + 1, -1] = inner[-1] / (1.0 + br * h)
            _guard(U[n + 1], n + 1, "state")
    return FieldHistory(U, tau, mesh)


def adjoint_solve(p: ModelParams, beta: BoundaryControl, u: FieldHistory,
                  mode=SchemeMode.CONSISTENT_GALERKIN, *, source: float = 1.0,
                  terminal: float = 0.0, discrete: bool = False) -> FieldHistory:
    """March the adjoint backward from phi(T) = ``terminal``.

    The right-hand side carries the constant ``source`` (1 for the
    space-time cost) and the two nonlocal f'(u) couplings, taken from the
    already-computed later level.  Step n+1 -> n uses the control at level n.
    Only phi(T) is imposed; phi(0) is whatever the backward march produces.

    With ``discrete=True`` (consistent mode only) the result is instead the
    exact adjoint of the discrete cost ``sum_n c_n*source*int u^n + terminal*int u^N``
    (``c_n`` trapezoid weights in time), rescaled level-wise by ``tau / c_n``
    so that ``2*beta - u*phi`` integrated with trapezoid weights is the exact
    derivative of the discrete cost.  Its first level is zero because the
    control at t = 0 does not act on the state.
    """
    mode = SchemeMode.parse(mode)
    mesh = _check_inputs(p, beta)
    _check_history(p, mesh, u)
    tau = p.time_step
    P = np.empty((p.n_levels, mesh.n_nodes))
    P[-1] = terminal

    if discrete and mode is not SchemeMode.CONSISTENT_GALERKIN:
        raise ValueError("the discrete adjoint is only available for the consistent Galerkin scheme")

    if mode is SchemeMode.CONSISTENT_GALERKIN:
        A, B = assemble_mass(mesh), assemble_stiffness(mesh)
        w = quadrature_weights(mesh)
        if discrete:
            top = consistent_step_matrix(mesh, tau, beta.left[-1], beta.right[-1], A, B)
            P[-1] = _solve(top, (0.5 * tau * source + terminal) * w, p.n_steps, "adjoint")
        for n in range(p.n_steps - 1, -1, -1):
            lhs = consistent_step_matrix(mesh, tau, beta.left[n], beta.right[n], A, B)
            load = source * w + _nonlocal_adjoint_load(p, w, u[n], P[n + 1])
            P[n] = _solve(lhs, A.matvec(P[n + 1]) + tau * load, n, "adjoint")
            _guard(P[n], n, "adjoint")
        if discrete:
            P[-1] *= 2.0
            P[0] = 0.0
    else:
        h = mesh.h
        cf = p.conductivity
        for n in range(p.n_steps - 1, -1, -1):
            bl, br = beta.left[n], beta.right[n]
            known, unknown = paper_adjoint_rows(mesh, tau, bl, br)
            later = P[n + 1]
            f0, fN = cf.eval(np.array([u[n][0], u[n][-1]]))
            df0 = cf.deriv(np.array([u[n][0]]))[0]
            rhs = tau * h * source - known.matvec(later[:-1])
            rhs[0] += 2.0 * p.lam * tau * beta.left[n] * df0 / (fN + f0) ** 2 * later[0]
            rhs[0] += 2.0 * p.lam * tau * (later[0] + later[-1]) * f0 / (fN + f0) ** 3
            inner = _solve(unknown, rhs, n, "adjoint")
            P[n, :-1] = inner
            P[n, -1] = inner[-1] / (1.0 + br * h)
            _guard(P[n], n, "adjoint")
    return FieldHistory(P, tau, mesh)


def sensitivity_solve(p: ModelParams, beta: BoundaryControl, u: FieldHistory, l: BoundaryControl,
                      mode=SchemeMode.CONSISTENT_GALERKIN) -> FieldHistory:
    """Directional derivative psi of the discrete state map in direction ``l``.

    psi(0) = 0.  Each step reuses the forward operator; the nonlocal terms are
    linearised at level n and the boundary load ``-l*u`` enters through the
    Robin rows at level n+1, so psi is the exact derivative of
    :func:`forward_solve` for the same mode.
    """
    mode = SchemeMode.parse(mode)
    mesh = _check_inputs(p, beta, l)
    _check_history(p, mesh, u)
    tau = p.time_step
    S = np.zeros((p.n_levels, mesh.n_nodes))

    if mode is SchemeMode.CONSISTENT_GALERKIN:
        A, B = assemble_mass(mesh), assemble_stiffness(mesh)
        w = quadrature_weights(mesh)
        for n in range(p.n_steps):
            lhs = consistent_step_matrix(mesh, tau, beta.left[n + 1], beta.right[n + 1], A, B)
            rhs = A.matvec(S[n]) + tau * _nonlocal_linearization(p, w, u[n], S[n])
            rhs[0] -= tau * l.left[n + 1] * u[n + 1][0]
            rhs[-1] -= tau * l.right[n + 1] * u[n + 1][-1]
            S[n + 1] = _solve(lhs, rhs, n + 1, "sensitivity")
            _guard(S[n + 1], n + 1, "sensitivity")
    else:
        h = mesh.h
        cf = p.conductivity
        for n in range(p.n_steps):
            bl, br = beta.left[n + 1], beta.right[n + 1]
            ll, lr = l.left[n + 1], l.right[n + 1]
            lhs, rmat = paper_forward_rows(mesh, tau, bl, br)
            a = h / 6.0 - tau / h
            new = u[n + 1]
            old, dold = u[n], S[n]
            rhs = rmat.matvec(dold[:-1])
            # d/dbeta of the beta-dependent matrix entries, applied to the state
            rhs[0] += ll * (h * h / 6.0) * old[0] - ll * (a * h + tau / 2.0) * new[0]
            q = 1.0 + br * h
            rhs[-1] += -lr * (2.0 * h / 3.0) * h / (4.0 * q * q) * old[-2] + lr * a * h / (q * q) * new[-2]
            f0, fN = cf.eval(np.array([old[0], old[-1]]))
            df0, dfN = cf.deriv(np.array([old[0], old[-1]]))
            s = f0 + fN
            rhs[0] += 2.0 * p.lam * tau * (df0 * dold[0] / s**2
                                           - 2.0 * f0 * (df0 * dold[0] + dfN * dold[-1]) / s**3)
            inner = _solve(lhs, rhs, n + 1, "sensitivity")
            S[n + 1, :-1] = inner
            S[n + 1, -1] = inner[-1] / q - lr * h * new[-2] / (q * q)
            _guard(S[n + 1], n + 1, "sensitivity")
    return FieldHistory(S, tau, mesh)
