"""Incompressible Euler flow on a rotating biaxial ellipsoid, solved pseudospectrally."""

__version__ = "0.1.0"

from .basis import (
    Basis,
    BasisError,
    GridScalar,
    SpectralScalar,
    analysis,
    apply_laplacian,
    build_basis,
    invert_laplacian,
    synthesis,
)
from .calculus import (
    VelocityField,
    advect,
    curl,
    div,
    grad,
    hk_norm_scalar,
    hk_norm_velocity,
    hodge_decompose,
    jacobian,
    l2_inner,
    perp_grad,
)
from .dynamics import RunConfig, SimulationError, SolverState, run, step_rk4, tendency, time_average
from .geometry import Geometry, build_geometry
from .rotation import RotationOps, build_rotation

__all__ = [
    "Basis",
    "BasisError",
    "Geometry",
    "GridScalar",
    "RotationOps",
    "RunConfig",
    "SimulationError",
    "SolverState",
    "SpectralScalar",
    "VelocityField",
    "advect",
    "analysis",
    "apply_laplacian",
    "build_basis",
    "build_geometry",
    "build_rotation",
    "curl",
    "div",
    "grad",
    "hk_norm_scalar",
    "hk_norm_velocity",
    "hodge_decompose",
    "invert_laplacian",
    "jacobian",
    "l2_inner",
    "perp_grad",
    "run",
    "step_rk4",
    "synthesis",
    "tendency",
    "time_average",
]
