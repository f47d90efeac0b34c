"""Continuous problem definition for the nonlocal thermistor control problem.

The state equation on Omega = (0, 1) is

    u_t - u_xx = lam * f(u) / (int_0^1 f(u) dx)**2,
    du/dnu = -beta * u  at x = 0 and x = 1,
    u(0) = u0,

and the control beta lives in the box [m, M].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "ConductivityFunction",
    "ControlBox",
    "ModelParams",
    "builtin_conductivity",
    "check_conductivity",
    "validate_params",
    "CONDUCTIVITY_IDS",
]


@dataclass(frozen=True)
class ConductivityFunction:
    """Electrical conductivity f with its declared growth/Lipschitz data.

    ``lower_bound`` and ``upper_const`` are the constants of
    ``lower_bound <= f(xi) <= upper_const * (|xi|**(alpha + 1) + 1)``,
    kept separate rather than sharing one generic constant.
    """

    id: str
    eval: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    deriv: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    lower_bound: float
    upper_const: float
    growth_exponent: float
    lipschitz_const: float

    def __call__(self, xi):
        return self.eval(xi)


@dataclass(frozen=True)
class ControlBox:
    """Admissible range ``m <= beta <= M`` for the heat-transfer coefficient."""

    m: float
    M: float

    def clamp(self, values):
        # max first, then min: ties at the bounds resolve identically every time
        return np.minimum(np.maximum(values, self.m), self.M)


@dataclass(frozen=True)
class ModelParams:
    lam: float
    horizon: float
    conductivity: ConductivityFunction
    box: ControlBox
    initial_temperature: np.ndarray = field(repr=False)
    n_elements: int
    time_step: float

    def __post_init__(self):
        u0 = self.initial_temperature
        if callable(u0):
            u0 = u0(np.linspace(0.0, 1.0, self.n_elements + 1))
        u0 = np.array(u0, dtype=float)
        if u0.ndim == 0:
            u0 = np.full(self.n_elements + 1, float(u0))
        u0.setflags(write=False)
        object.__setattr__(self, "initial_temperature", u0)

    @property
    def n_steps(self) -> int:
        """Number of time steps T / tau (levels are 0..n_steps)."""
        return int(round(self.horizon / self.time_step))

    @property
    def n_levels(self) -> int:
        return self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        return self.time_step * np.arange(self.n_levels)

    def mesh(self):
        from .fem1d import Mesh1D

        return Mesh1D(self.n_elements)

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace

        if "n_elements" in changes and "initial_temperature" not in changes:
            u0 = self.initial_temperature
            if np.all(u0 == u0[0]):
                changes["initial_temperature"] = float(u0[0])
            else:
                old = np.linspace(0.0, 1.0, u0.size)
                new = np.linspace(0.0, 1.0, changes["n_elements"] + 1)
                changes["initial_temperature"] = np.interp(new, old, u0)
        return replace(self, **changes)


def _constant(c: float) -> ConductivityFunction:
    if not c > 0:
        raise ConfigurationError(f"constant conductivity must be positive, got {c}")
    return ConductivityFunction(
        id=f"constant({c:g})",
        eval=lambda xi: np.full_like(np.asarray(xi, dtype=float), c),
        deriv=lambda xi: np.zeros_like(np.asarray(xi, dtype=float)),
        lower_bound=c,
        upper_const=c,
        growth_exponent=0.0,
        # any positive constant bounds the (zero) variation
        lipschitz_const=1.0,
    )


def _shifted_sine() -> ConductivityFunction:
    return ConductivityFunction(
        id="shifted_sine",
        eval=lambda xi: 2.0 + np.sin(xi),
        deriv=lambda xi: np.cos(xi),
        lower_bound=1.0,
        upper_const=3.0,
        growth_exponent=0.0,
        lipschitz_const=1.0,
    )


def _rational_bump() -> ConductivityFunction:
    # max |f'| = 3*sqrt(3)/8 at xi = 1/sqrt(3)
    return ConductivityFunction(
        id="rational_bump",
        eval=lambda xi: 1.0 + 1.0 / (1.0 + np.square(xi)),
        deriv=lambda xi: -2.0 * np.asarray(xi) / np.square(1.0 + np.square(xi)),
        lower_bound=1.0,
        upper_const=2.0,
        growth_exponent=0.0,
        lipschitz_const=3.0 * math.sqrt(3.0) / 8.0,
    )


CONDUCTIVITY_IDS = ("constant", "shifted_sine", "rational_bump")


def builtin_conductivity(id: str, c: float | None = None) -> ConductivityFunction:
    """Return a catalog conductivity.

    ``id`` is ``"shifted_sine"``, ``"rational_bump"``, ``"constant"`` (with
    ``c``) or the compact spelling ``"constant(2)"`` / ``"constant:2"``.
    """
    key = id.strip()
    if key.startswith("constant"):
        arg = key[len("constant"):].strip()
        if arg.startswith("(") and arg.endswith(")"):
            arg = arg[1:-1]
        elif arg.startswith(":"):
            arg = arg[1:]
        if arg:
            try:
                c = float(arg)
            except ValueError:
                raise ConfigurationError(f"bad constant conductivity value in {id!r}") from None
        if c is None:
            raise ConfigurationError("constant conductivity needs a value, e.g. 'constant(2)'")
        return _constant(float(c))
    if key == "shifted_sine":
        return _shifted_sine()
    if key == "rational_bump":
        return _rational_bump()
    raise ConfigurationError(f"unknown conductivity id {id!r}; expected one of {CONDUCTIVITY_IDS}")


def check_conductivity(cf: ConductivityFunction, lo=-10.0, hi=10.0, n_samples=10_000,
                       fd_step=1e-4) -> list[str]:
    """Sampled checks of positivity, growth, Lipschitz bound and derivative."""
    problems = []
    xi = np.linspace(lo, hi, n_samples)
    fx = np.asarray(cf.eval(xi), dtype=float)
    if not np.all(np.isfinite(fx)):
        return [f"conductivity {cf.id}: non-finite values"]
    if cf.lower_bound <= 0:
        problems.append(f"conductivity {cf.id}: lower bound must be positive")
    if cf.lipschitz_const <= 0:
        problems.append(f"conductivity {cf.id}: Lipschitz constant must be positive")
    if cf.growth_exponent < 0:
        problems.append(f"conductivity {cf.id}: growth exponent must be non-negative")
    if np.any(fx < cf.lower_bound):
        problems.append(f"conductivity {cf.id}: falls below declared lower bound")
    growth = cf.upper_const * (np.abs(xi) ** (cf.growth_exponent + 1.0) + 1.0)
    if np.any(fx > growth * (1 + 1e-12)):
        problems.append(f"conductivity {cf.id}: exceeds declared growth bound")
    slopes = np.abs(np.diff(fx)) / np.diff(xi)
    if np.any(slopes > cf.lipschitz_const * (1 + 1e-9)):
        problems.append(f"conductivity {cf.id}: violates declared Lipschitz constant")
    centered = (np.asarray(cf.eval(xi + fd_step)) - np.asarray(cf.eval(xi - fd_step))) / (2 * fd_step)
    # central difference error is fd_step**2/6 * max|f'''|; allow a generous multiple
    if np.max(np.abs(centered - np.asarray(cf.deriv(xi)))) > 10.0 * fd_step**2 * (1 + np.max(np.abs(fx))):
        problems.append(f"conductivity {cf.id}: derivative disagrees with finite differences")
    return problems


def validate_params(p: ModelParams) -> list[str]:
    """List every violated parameter constraint (empty list means valid)."""
    out = []
    if not (np.isfinite(p.lam) and p.lam >= 0):
        out.append("lambda must be finite and non-negative")
    if not (np.isfinite(p.horizon) and p.horizon > 0):
        out.append("horizon must be positive")
    if not (np.isfinite(p.time_step) and p.time_step > 0):
        out.append("time step must be positive")
    elif p.horizon > 0:
        if p.time_step >= p.horizon:
            out.append("time step must be smaller than horizon")
        ratio = p.horizon / p.time_step
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            out.append("horizon not an integer multiple of time step")
    if not p.box.m > 0:
        out.append("control lower bound must be positive")
    if not p.box.M >= p.box.m:
        out.append("control upper bound must not be below the lower bound")
    if int(p.n_elements) != p.n_elements or p.n_elements < 2:
        out.append("n_elements must be an integer >= 2")
    u0 = p.initial_temperature
    if u0.shape != (int(p.n_elements) + 1,):
        out.append(f"initial temperature must have n_elements + 1 = {int(p.n_elements) + 1} nodal values")
    elif not np.all(np.isfinite(u0)):
        out.append("initial temperature must be finite at every node")
    out.extend(check_conductivity(p.conductivity))
    return out
