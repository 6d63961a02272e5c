"""Spectral-Galerkin optimal control of semilinear evolution equations.

Eigenbases on the circle, the sphere and the zonal interval, ETD2 Galerkin
integration, adjoint projected-gradient optimization, and checkers for the
Galerkin error estimates of value functions and optimal controls, applied to
energy balance climate models.
"""

__version__ = "0.1.0"

from .spectral import (
    SpectralField,
    QuadratureGrid,
    project,
    residual_energy,
    synthesize,
    analyze,
)
from .bases import (
    EigenBasis,
    build_circle_basis,
    build_sphere_basis,
    build_zonal_sl_basis,
)
from .dynamics import (
    PointwiseMap,
    ControlOperator,
    ControlSignal,
    SemilinearProblem,
    Trajectory,
    galerkin_rhs,
    integrate,
    solve_reference,
)
from .control import (
    CostFunctional,
    OCPSolution,
    evaluate_cost,
    adjoint_solve,
    gradient,
    project_control,
    optimize,
    value_function,
    lq_riccati_oracle,
)
