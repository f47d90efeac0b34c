"""Uniform P1 finite elements on [0, 1]: assembly, tridiagonal solves, quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import SingularSystemError

__all__ = [
    "Mesh1D",
    "Tridiagonal",
    "assemble_mass",
    "assemble_stiffness",
    "thomas_solve",
    "quadrature_weights",
    "integrate_nodal",
    "star_norm_sq",
    "boundary_trace",
    "PIVOT_RTOL",
]

PIVOT_RTOL = 1e-14


@dataclass(frozen=True)
class Mesh1D:
    """Uniform partition 0 = x_0 < ... < x_N = 1 carrying hat functions v_j."""

    n_elements: int

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 1:
            raise ValueError(f"n_elements must be a positive integer, got {self.n_elements}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_elements

    @property
    def n_nodes(self) -> int:
        return self.n_elements + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.linspace(0.0, 1.0, self.n_nodes)
        x.setflags(write=False)
        return x

    def interpolate(self, g) -> np.ndarray:
        """Nodal values of a callable, scalar, or already-nodal array."""
        if callable(g):
            return np.asarray(g(self.nodes), dtype=float) * np.ones(self.n_nodes)
        g = np.asarray(g, dtype=float)
        if g.ndim == 0:
            return np.full(self.n_nodes, float(g))
        if g.shape != (self.n_nodes,):
            raise ValueError(f"expected {self.n_nodes} nodal values, got shape {g.shape}")
        return g.copy()


@dataclass(frozen=True)
class Tridiagonal:
    """Square tridiagonal matrix stored by its three diagonals."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __post_init__(self):
        for name in ("sub", "diag", "sup"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        n = self.diag.size
        if self.sub.size != max(n - 1, 0) or self.sup.size != max(n - 1, 0):
            raise ValueError("inconsistent tridiagonal lengths")

    @property
    def size(self) -> int:
        return self.diag.size

    def __add__(self, other: "Tridiagonal") -> "Tridiagonal":
        return Tridiagonal(self.sub + other.sub, self.diag + other.diag, self.sup + other.sup)

    def __mul__(self, c: float) -> "Tridiagonal":
        return Tridiagonal(c * self.sub, c * self.diag, c * self.sup)

    __rmul__ = __mul__

    def add_to_diagonal(self, values) -> "Tridiagonal":
        return Tridiagonal(self.sub, self.diag + values, self.sup)

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = self.diag * x
        y[:-1] += self.sup * x[1:]
        y[1:] += self.sub * x[:-1]
        return y

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.sub, -1) + np.diag(self.sup, 1)

    def row(self, j: int) -> tuple[float, float, float]:
        """(left, diagonal, right) coefficients of row j; missing neighbours are 0."""
        left = self.sub[j - 1] if j > 0 else 0.0
        right = self.sup[j] if j < self.size - 1 else 0.0
        return float(left), float(self.diag[j]), float(right)


def assemble_mass(mesh: Mesh1D) -> Tridiagonal:
    """Consistent Galerkin mass matrix ``a_ij = int v_i v_j dx``."""
    h, n = mesh.h, mesh.n_nodes
    diag = np.full(n, 2.0 * h / 3.0)
    diag[0] = diag[-1] = h / 3.0
    off = np.full(n - 1, h / 6.0)
    return Tridiagonal(off, diag, off)


def assemble_stiffness(mesh: Mesh1D) -> Tridiagonal:
    """Stiffness matrix ``b_ij = int v_i' v_j' dx``."""
    h, n = mesh.h, mesh.n_nodes
    diag = np.full(n, 2.0 / h)
    diag[0] = diag[-1] = 1.0 / h
    off = np.full(n - 1, -1.0 / h)
    return Tridiagonal(off, diag, off)


def thomas_solve(t: Tridiagonal, rhs) -> np.ndarray:
    """Solve ``t @ x = rhs`` by forward elimination and back substitution.

    Raises
    ------
    SingularSystemError
        If a pivot falls below ``PIVOT_RTOL`` times the scale of its row.
    """
    d = np.asarray(rhs, dtype=float)
    n = t.size
    if d.shape != (n,):
        raise ValueError(f"rhs has shape {d.shape}, expected ({n},)")
    a, b, c = t.sub, t.diag, t.sup
    scale = np.abs(b).copy()
    scale[1:] = np.maximum(scale[1:], np.abs(a))
    scale[:-1] = np.maximum(scale[:-1], np.abs(c))

    cp = np.empty(max(n - 1, 0))
    dp = np.empty(n)
    piv = b[0]
    if abs(piv) <= PIVOT_RTOL * scale[0]:
        raise SingularSystemError("zero pivot in row 0", row=0)
    if n > 1:
        cp[0] = c[0] / piv
    dp[0] = d[0] / piv
    for i in range(1, n):
        piv = b[i] - a[i - 1] * cp[i - 1]
        if abs(piv) <= PIVOT_RTOL * scale[i]:
            raise SingularSystemError(f"zero pivot in row {i}", row=i)
        if i < n - 1:
            cp[i] = c[i] / piv
        dp[i] = (d[i] - a[i - 1] * dp[i - 1]) / piv

    x = dp
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


def quadrature_weights(mesh: Mesh1D) -> np.ndarray:
    """Trapezoid weights ``int v_j dx``: h inside, h/2 at the two ends."""
    w = np.full(mesh.n_nodes, mesh.h)
    w[0] = w[-1] = 0.5 * mesh.h
    return w


def integrate_nodal(mesh: Mesh1D, g) -> float:
    """Trapezoid rule over [0, 1]; exact for piecewise-linear integrands."""
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != mesh.n_nodes:
        raise ValueError(f"field has {g.shape[-1]} values, mesh has {mesh.n_nodes} nodes")
    return g @ quadrature_weights(mesh)


def star_norm_sq(mesh: Mesh1D, g, m: float) -> float:
    """``int |g'|^2 dx + m * (g(0)^2 + g(1)^2)`` for a P1 field."""
    g = np.asarray(g, dtype=float)
    return float(np.sum(np.diff(g) ** 2) / mesh.h + m * (g[0] ** 2 + g[-1] ** 2))


def boundary_trace(g) -> tuple[float, float]:
    g = np.asarray(g)
    return float(g[0]), float(g[-1])
