"""Flux-conserving meshfree (GFDM) operators and Lagrangian benchmark solvers."""

from .cells import ControlCell, build_cells, build_control_cell, cell_geometric_residuals, stitching_error
from .cloud import (
    CloudParams,
    PointCloud,
    build_neighborhoods,
    compute_time_step,
    discretize_domain,
    manage_cloud,
    mls_interpolate,
    move_points,
)
from .const import PointKind
from .domain import Box, Rectangle, RectangleWithHole, Sphere
from .errors import FluxpointError
from .solve import (
    FluidParams,
    SimulationState,
    SolverConfig,
    SparseSystem,
    advection_diffusion_step,
    apply_boundary_rows,
    bicgstab,
    nse_projection_step,
    transport_system,
)
from .stencils import OperatorLabel, StencilRow, classical_operators, fc_operators_advdiff, fc_operators_nse

__all__ = [
    "Box",
    "CloudParams",
    "ControlCell",
    "FluidParams",
    "FluxpointError",
    "OperatorLabel",
    "PointCloud",
    "PointKind",
    "Rectangle",
    "RectangleWithHole",
    "SimulationState",
    "SolverConfig",
    "SparseSystem",
    "Sphere",
    "StencilRow",
    "advection_diffusion_step",
    "apply_boundary_rows",
    "bicgstab",
    "build_cells",
    "build_control_cell",
    "build_neighborhoods",
    "cell_geometric_residuals",
    "classical_operators",
    "compute_time_step",
    "discretize_domain",
    "fc_operators_advdiff",
    "fc_operators_nse",
    "manage_cloud",
    "mls_interpolate",
    "move_points",
    "nse_projection_step",
    "stitching_error",
    "transport_system",
]
