"""Monitors and independent oracles used by the test-suite and ``verify``.

Nothing here mutates its inputs.  ``dense_reference_solve`` deliberately
shares no assembly code with :mod:`fem1d`: it integrates the element
matrices itself, solves dense systems, and makes the nonlocal term implicit
by Picard iteration.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import fem1d
from .errors import DivergenceError, OracleError
from .fem1d import Mesh1D, integrate_nodal, star_norm_sq
from .model import ModelParams
from .pde_solvers import BoundaryControl, FieldHistory, SchemeMode, forward_solve

__all__ = [
    "EnergyMonitor",
    "CrossCheck",
    "energy_bound_report",
    "linf_monitor",
    "dense_reference_solve",
    "scheme_cross_check",
    "element_matrices_oracle",
    "assembly_check",
    "star_norm_time_integral",
    "REFINEMENT_SEQUENCE",
]

REFINEMENT_SEQUENCE = ((20, 100), (40, 200), (80, 400))


@dataclass(frozen=True)
class EnergyMonitor:
    max_l2_sq: float
    gradient_part: float
    boundary_part: float
    max_linf: float

    @property
    def star_part(self) -> float:
        return self.gradient_part + self.boundary_part

    @property
    def total(self) -> float:
        return self.max_l2_sq + self.star_part

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(star_part=self.star_part, total=self.total)
        return out


def _time_weights(n_levels: int, dt: float) -> np.ndarray:
    c = np.full(n_levels, dt)
    c[0] = c[-1] = 0.5 * dt
    return c


def energy_bound_report(p: ModelParams, u: FieldHistory) -> EnergyMonitor:
    """``max_n ||u^n||_2^2`` and the trapezoid-in-time integral of the star norm.

    ``||.||_2`` is the trapezoid L2 norm; the star norm uses the lower
    control bound ``m`` as boundary weight.
    """
    mesh = u.mesh
    m = p.box.m
    l2 = integrate_nodal(mesh, u.levels**2)
    grad = np.sum(np.diff(u.levels, axis=1) ** 2, axis=1) / mesh.h
    bnd = m * (u.levels[:, 0] ** 2 + u.levels[:, -1] ** 2)
    c = _time_weights(u.n_levels, u.dt)
    return EnergyMonitor(
        max_l2_sq=float(np.max(l2)),
        gradient_part=float(c @ grad),
        boundary_part=float(c @ bnd),
        max_linf=linf_monitor(u),
    )


def linf_monitor(field: FieldHistory) -> float:
    return float(np.max(np.abs(field.levels)))


def star_norm_time_integral(p: ModelParams, u: FieldHistory) -> float:
    c = _time_weights(u.n_levels, u.dt)
    return float(sum(ci * star_norm_sq(u.mesh, level, p.box.m) for ci, level in zip(c, u.levels)))


def element_matrices_oracle(n_elements: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense mass and stiffness matrices by 3-point Gauss quadrature per element."""
    h = 1.0 / n_elements
    gp, gw = np.polynomial.legendre.leggauss(3)
    xi = 0.5 * (gp + 1.0)
    wts = 0.5 * gw * h
    phi = np.array([1.0 - xi, xi])           # local hats at the Gauss points
    dphi = np.array([-1.0, 1.0]) / h
    n = n_elements + 1
    mass = np.zeros((n, n))
    stiff = np.zeros((n, n))
    for e in range(n_elements):
        idx = [e, e + 1]
        for a in range(2):
            for b in range(2):
                mass[idx[a], idx[b]] += np.sum(wts * phi[a] * phi[b])
                stiff[idx[a], idx[b]] += dphi[a] * dphi[b] * h
    return mass, stiff


def dense_reference_solve(p: ModelParams, beta: BoundaryControl, picard_tol: float = 1e-12,
                          max_picard: int = 50) -> FieldHistory:
    """Brute-force state trajectory with an implicit nonlocal source.

    Each step solves ``(A + tau*K(beta^{n+1})) u = A u^n + tau*S(u)`` with the
    source re-evaluated at the new level until successive iterates differ
    by at most ``picard_tol`` (relative to ``max(1, |u|)``).
    """
    N = p.n_elements
    if N > 200:
        raise ValueError("dense_reference_solve is limited to n_elements <= 200")
    if beta.n_levels != p.n_levels:
        raise ValueError("control does not match the time grid")
    tau = p.time_step
    mass, stiff = element_matrices_oracle(N)
    lumped = mass.sum(axis=1)
    f = p.conductivity.eval
    U = np.empty((p.n_levels, N + 1))
    U[0] = p.initial_temperature
    for n in range(p.n_steps):
        K = mass + tau * stiff
        K[0, 0] += tau * beta.left[n + 1]
        K[N, N] += tau * beta.right[n + 1]
        base = mass @ U[n]
        cur = U[n].copy()
        for _ in range(max_picard):
            fu = f(cur)
            src = p.lam * lumped * fu / (lumped @ fu) ** 2
            nxt = np.linalg.solve(K, base + tau * src)
            if not np.all(np.isfinite(nxt)):
                raise OracleError(f"reference solve produced non-finite values at level {n + 1}")
            delta = np.max(np.abs(nxt - cur))
            cur = nxt
            if delta <= picard_tol * max(1.0, np.max(np.abs(cur))):
                break
        else:
            raise OracleError(f"Picard iteration did not converge at level {n + 1} (last update {delta:.3e})")
        U[n + 1] = cur
    return FieldHistory(U, tau, Mesh1D(N))


@dataclass(frozen=True)
class CrossCheck:
    level_gaps: np.ndarray
    max_gap: float
    normalized_gap: float
    h: float
    tau: float
    paper_error: str | None = None

    def as_dict(self) -> dict:
        finite = np.isfinite(self.max_gap)
        return {
            "max_gap": self.max_gap if finite else None,
            "normalized_gap": self.normalized_gap if finite else None,
            "h": self.h,
            "tau": self.tau,
            "paper_error": self.paper_error,
        }


def scheme_cross_check(p: ModelParams, beta: BoundaryControl) -> CrossCheck:
    """Per-level max-norm gap between the two assembly modes.

    A divergent paper-faithful run is recorded in ``paper_error`` with
    infinite gaps rather than raised.
    """
    consistent = forward_solve(p, beta, SchemeMode.CONSISTENT_GALERKIN)
    h, tau = 1.0 / p.n_elements, p.time_step
    try:
        paper = forward_solve(p, beta, SchemeMode.PAPER_FAITHFUL)
    except DivergenceError as exc:
        gaps = np.full(p.n_levels, np.inf)
        return CrossCheck(gaps, np.inf, np.inf, h, tau, str(exc))
    gaps = np.max(np.abs(paper.levels - consistent.levels), axis=1)
    gmax = float(gaps.max())
    return CrossCheck(gaps, gmax, gmax / (h + tau), h, tau)


def assembly_check(n_elements: int) -> dict:
    """Largest entry-wise gap between ``fem1d`` assembly and the quadrature oracle."""
    mesh = Mesh1D(n_elements)
    mass_ref, stiff_ref = element_matrices_oracle(n_elements)
    mass = fem1d.assemble_mass(mesh).to_dense()
    stiff = fem1d.assemble_stiffness(mesh).to_dense()
    return {
        "mass": float(np.max(np.abs(mass - mass_ref)) / np.max(np.abs(mass_ref))),
        "stiffness": float(np.max(np.abs(stiff - stiff_ref)) / np.max(np.abs(stiff_ref))),
    }
