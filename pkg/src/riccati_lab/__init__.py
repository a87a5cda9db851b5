"""Numerical laboratory for linear-quadratic optimal control of surrogate
boundary-control systems: differential and algebraic Riccati solvers with
property-level verification of the integral forms, cost identities,
contraction constructions, and uniqueness arguments they rest on."""

from .models import (
    AssumptionParams,
    LqModel,
    composite_surrogate,
    decompose_adjoint_kernel,
    heat_boundary_surrogate,
    random_stable,
    shipped_models,
)
from .numkernel import (
    NumericalError,
    Propagator,
    SpectralData,
    WeightedNorm,
    fractional_power,
    graded_grid,
    matrix_exponential_apply,
    quadrature,
    solve_lyapunov,
    spectral_data,
    weighted_norm,
)
from .semiflow import ControlPath, Trajectory

__version__ = "0.1.0"
