"""Optimal boundary heat-transfer control for the 1D nonlocal thermistor equation."""

from .errors import (
    ConfigurationError,
    DivergenceError,
    GridMismatchError,
    OracleError,
    SingularSystemError,
    ThermistorError,
)
from .fem1d import (
    Mesh1D,
    Tridiagonal,
    assemble_mass,
    assemble_stiffness,
    boundary_trace,
    integrate_nodal,
    star_norm_sq,
    thomas_solve,
)
from .model import ConductivityFunction, ControlBox, ModelParams, builtin_conductivity, validate_params
from .pde_solvers import (
    BoundaryControl,
    FieldHistory,
    SchemeMode,
    adjoint_solve,
    forward_solve,
    sensitivity_solve,
)
from .optimal_control import (
    CostBreakdown,
    OptimalityReport,
    constant_parameter_sweep,
    cost,
    forward_backward_sweep,
    gradient_direction,
    project_constant_control,
    project_control,
    projected_gradient_descent,
)
from .diagnostics import dense_reference_solve, energy_bound_report, scheme_cross_check

__version__ = "0.1.0"
