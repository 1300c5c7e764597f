"""Implicit time steps: advection-diffusion and the Navier-Stokes projection."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse

from .cells import ControlCell, build_cells
from .cloud import Neighborhood, PointCloud, build_neighborhoods, manage_cloud, move_points
from .const import (
    DEFAULT_MAX_ITER,
    DEFAULT_REL_TOL,
    DEFAULT_WEIGHT_EXPONENT,
    METHOD_FC,
    METHODS,
    PointKind,
)
from .domain import DomainSpec
from .errors import FluxpointError, InvalidBoundary, MaxIterations, SolverBreakdown, StepError
from .metrics import (
    StepHistory,
    StepRecord,
    boundary_flux,
    ddt_error,
    divergence,
    domain_integral,
    total_divergence,
)
from .stencils import (
    OperatorLabel,
    StencilRow,
    classical_operators,
    fc_operators_advdiff,
    fc_operators_nse,
    gradient_labels,
)

_LOGGER = logging.getLogger(__name__)

_BREAKDOWN = np.finfo(float).eps ** 2

Rows = list[dict[OperatorLabel, StencilRow]]


@dataclass
class SolverConfig:
    rel_tol: float = DEFAULT_REL_TOL
    max_iter: int = DEFAULT_MAX_ITER
    restart_on_breakdown: bool = True

    def __post_init__(self):
        if self.rel_tol <= 0.0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")


@dataclass
class FluidParams:
    rho: float = 1.0
    eta: float = 0.0
    g: tuple[float, ...] = (0.0, 0.0)
    alpha: float = 0.0

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.eta < 0.0 or self.alpha < 0.0:
            raise ValueError("eta and alpha must be non-negative")


@dataclass
class SparseSystem:
    matrix: sparse.csr_matrix
    rhs: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_rows(
        cls, rows: Sequence[tuple[np.ndarray, np.ndarray]], rhs: np.ndarray
    ) -> "SparseSystem":
        """Assemble CSR from per-row (columns, values); duplicate columns are summed."""
        n = len(rows)
        counts = [len(cols) for cols, _ in rows]
        if min(counts, default=0) == 0:
            raise ValueError("every row of a sparse system needs at least one entry")
        row_ids = np.repeat(np.arange(n), counts)
        cols = np.concatenate([np.asarray(c) for c, _ in rows])
        vals = np.concatenate([np.asarray(v, dtype=float) for _, v in rows])
        matrix = sparse.csr_matrix((vals, (row_ids, cols)), shape=(n, n))
        matrix.sum_duplicates()
        matrix.sort_indices()
        return cls(matrix=matrix, rhs=np.asarray(rhs, dtype=float))


class BoundaryRule(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass
class BoundaryCondition:
    rule: BoundaryRule
    value: float = 0.0
    # Neumann rows only
    scale: float = 1.0


def bicgstab(
    system: SparseSystem, x0: Optional[np.ndarray] = None, cfg: Optional[SolverConfig] = None
) -> tuple[np.ndarray, int, float]:
    """Unpreconditioned BiCGSTAB.

    Returns the solution, the iteration count and the relative residual.
    """
    cfg = cfg or SolverConfig()
    A, b = system.matrix, system.rhs
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), 0, 0.0

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    target = cfg.rel_tol * b_norm
    r = b - A @ x
    res = float(np.linalg.norm(r))
    best_x, best_res = x.copy(), res
    if res <= target:
        return x, 0, res / b_norm

    restarts = 1 if cfg.restart_on_breakdown else 0
    r_hat = r.copy()
    p = v = np.zeros_like(b)
    rho = alpha = omega = 1.0
    fresh = True
    iterations = 0
    while iterations < cfg.max_iter:
        iterations += 1
        rho_new = float(r_hat @ r)
        breakdown = abs(rho_new) <= _BREAKDOWN * float(np.linalg.norm(r_hat)) * res
        if not breakdown:
            if fresh:
                p = r.copy()
            else:
                p = r + (rho_new / rho) * (alpha / omega) * (p - omega * v)
            v = A @ p
            denom = float(r_hat @ v)
            breakdown = denom == 0.0
        if not breakdown:
            alpha = rho_new / denom
            s = r - alpha * v
            s_norm = float(np.linalg.norm(s))
            if s_norm <= target:
                x = x + alpha * p
                return x, iterations, s_norm / b_norm
            t = A @ s
            tt = float(t @ t)
            breakdown = tt == 0.0
        if not breakdown:
            omega = float(t @ s) / tt
            x = x + alpha * p + omega * s
            r = s - omega * t
            res = float(np.linalg.norm(r))
            if res < best_res:
                best_x, best_res = x.copy(), res
            if res <= target:
                return x, iterations, res / b_norm
            rho = rho_new
            fresh = False
            breakdown = omega == 0.0
        if breakdown:
            if restarts == 0:
                raise SolverBreakdown(f"BiCGSTAB breakdown after {iterations} iterations")
            restarts -= 1
            _LOGGER.warning("BiCGSTAB breakdown at iteration %d, restarting", iterations)
            r = b - A @ x
            res = float(np.linalg.norm(r))
            if res <= target:
                return x, iterations, res / b_norm
            r_hat = r.copy()
            fresh = True
    raise MaxIterations(best_x, iterations, best_res / b_norm)


def apply_boundary_rows(
    system: SparseSystem,
    cloud: PointCloud,
    bc_table: dict[int, BoundaryCondition],
    gradients: Sequence[dict[OperatorLabel, StencilRow]],
) -> SparseSystem:
    """Replace the rows of boundary points by Dirichlet or Neumann rows."""
    if not bc_table:
        return system
    keep = np.ones(system.n)
    keep[list(bc_table)] = 0.0
    matrix = sparse.diags(keep) @ system.matrix
    rhs = system.rhs.copy()
    labels = gradient_labels(cloud.dim)
    data, row_ids, col_ids = [], [], []
    for i, bc in bc_table.items():
        if bc.rule is BoundaryRule.DIRICHLET:
            data.append([1.0])
            row_ids.append([i])
            col_ids.append([i])
            rhs[i] = bc.value
            continue
        normal = cloud.normal[i]
        if cloud.kind[i] == PointKind.INTERIOR or not np.isclose(np.linalg.norm(normal), 1.0):
            raise InvalidBoundary(i)
        rows = gradients[i]
        coeffs = sum(normal[k] * rows[label].coeffs for k, label in enumerate(labels))
        members = rows[labels[0]].members
        data.append(bc.scale * coeffs)
        row_ids.append(np.full(len(members), i))
        col_ids.append(members)
        rhs[i] = bc.scale * bc.value
    boundary = sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(row_ids), np.concatenate(col_ids))),
        shape=matrix.shape,
    )
    matrix = (matrix + boundary).tocsr()
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return SparseSystem(matrix=matrix, rhs=rhs)


VectorField = Callable[[np.ndarray, float], np.ndarray]
BoundaryVelocity = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
ScalarField = Callable[[np.ndarray, float], np.ndarray]


def _no_slip(x: np.ndarray, kind: np.ndarray, t: float) -> np.ndarray:
    return np.zeros_like(x)


@dataclass
class SimulationState:
    cloud: PointCloud
    domain: DomainSpec
    fluid: FluidParams = field(default_factory=FluidParams)
    method: str = METHOD_FC
    solver: SolverConfig = field(default_factory=SolverConfig)
    t: float = 0.0
    step: int = 0
    history: StepHistory = field(default_factory=StepHistory)
    weight_exponent: int = DEFAULT_WEIGHT_EXPONENT
    # transport velocity prescribed in space and time (advection-diffusion)
    velocity_field: Optional[VectorField] = None
    boundary_velocity: BoundaryVelocity = _no_slip
    boundary_pressure: Optional[ScalarField] = None
    exact_velocity: Optional[VectorField] = None
    operators: Optional["StepOperators"] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")


@dataclass
class StepOperators:
    neighborhoods: list[Neighborhood]
    cells: list[ControlCell]
    classical: Rows
    rows: Rows
    seconds: float = 0.0

    @property
    def dropped_constraints(self) -> int:
        return sum(row.dropped_constraints for point_rows in self.rows for row in point_rows.values())


def _advance_cloud(state: SimulationState, dt: float) -> None:
    move_points(state.cloud, dt)
    manage_cloud(state.cloud, state.domain)


def _solve(system: SparseSystem, x0: np.ndarray, cfg: SolverConfig, record: StepRecord):
    start = time.perf_counter()
    x, iterations, _ = bicgstab(system, x0, cfg)
    record.iterations += iterations
    record.solver_seconds += time.perf_counter() - start
    return x


def transport_system(
    cloud: PointCloud, rows: Rows, classical: Rows, phi_n: np.ndarray, dt: float
) -> SparseSystem:
    """Implicit Euler rows (1/dt) delta - c^D, homogeneous Neumann on the boundary."""
    inv_dt = 1.0 / dt
    entries = []
    for i, point_rows in enumerate(rows):
        row = point_rows[OperatorLabel.DIFFUSION]
        entries.append((np.append(row.members, i), np.append(-row.coeffs, inv_dt)))
    system = SparseSystem.from_rows(entries, phi_n * inv_dt)
    bc_table = {
        int(i): BoundaryCondition(BoundaryRule.NEUMANN, scale=cloud.h[i] * inv_dt)
        for i in np.flatnonzero(cloud.is_boundary)
    }
    return apply_boundary_rows(system, cloud, bc_table, classical)


def advection_diffusion_step(state: SimulationState, dt: float) -> SimulationState:
    """Lagrangian implicit-Euler step of d(phi)/dt = div(alpha grad phi)."""
    step, t_new = state.step + 1, state.t + dt
    cloud = state.cloud
    try:
        start = time.perf_counter()
        _advance_cloud(state, dt)
        if state.velocity_field is not None:
            cloud.v = state.velocity_field(cloud.x, t_new)
        phi_n = cloud.phi.copy()
        alpha = np.full(len(cloud), state.fluid.alpha)
        nbhds = build_neighborhoods(cloud)
        cells = build_cells(cloud, nbhds)
        classical = [
            classical_operators(cloud, nb, alpha=alpha, weight_exponent=state.weight_exponent)
            for nb in nbhds
        ]
        if state.method == METHOD_FC:
            rows = [
                fc_operators_advdiff(
                    cloud, nb, cell, phi_n, alpha, classical=cl, weight_exponent=state.weight_exponent
                )
                for nb, cell, cl in zip(nbhds, cells, classical)
            ]
        else:
            rows = classical
        ops = StepOperators(nbhds, cells, classical, rows, time.perf_counter() - start)

        record = StepRecord(step=step, t=t_new, dt=dt, n_points=len(cloud), operator_seconds=ops.seconds)
        system = transport_system(cloud, rows, classical, phi_n, dt)
        cloud.phi = _solve(system, phi_n, state.solver, record)

        record.phi_integral = domain_integral(cells, cloud.phi)
        record.adv_boundary_flux = boundary_flux(cloud, cells, cloud.v * cloud.phi[:, None])
        record.eps_ddt = ddt_error(cloud, cells, rows, cloud.v)
        record.dropped_constraints = ops.dropped_constraints
    except FluxpointError as err:
        raise StepError(step, t_new, err) from err

    state.history.append(record)
    state.operators = ops
    state.step, state.t = step, t_new
    _LOGGER.info(
        "Step %d t=%.4g dt=%.3g: %d points, %d iterations, phi integral %.6g",
        step, t_new, dt, record.n_points, record.iterations, record.phi_integral,
    )
    return state


def _momentum_bc(cloud: PointCloud, values: np.ndarray, dt: float, k: int) -> dict[int, BoundaryCondition]:
    table = {}
    for i in np.flatnonzero(cloud.is_boundary):
        if cloud.kind[i] == PointKind.OUTFLOW:
            table[int(i)] = BoundaryCondition(BoundaryRule.NEUMANN, scale=cloud.h[i] / dt)
        else:
            table[int(i)] = BoundaryCondition(BoundaryRule.DIRICHLET, value=float(values[i, k]))
    return table


def _pressure_bc(
    state: SimulationState, p_star: np.ndarray, t: float, dt: float
) -> dict[int, BoundaryCondition]:
    cloud = state.cloud
    rho = state.fluid.rho
    table = {}
    exact = None
    if state.boundary_pressure is not None:
        exact = state.boundary_pressure(cloud.x, t)
    for i in np.flatnonzero(cloud.is_boundary):
        kind = cloud.kind[i]
        if kind == PointKind.OUTFLOW:
            table[int(i)] = BoundaryCondition(BoundaryRule.DIRICHLET, value=0.0)
        elif kind == PointKind.DIRICHLET and exact is not None:
            table[int(i)] = BoundaryCondition(BoundaryRule.DIRICHLET, value=float(exact[i] - p_star[i]))
        else:
            table[int(i)] = BoundaryCondition(BoundaryRule.NEUMANN, scale=dt / (rho * cloud.h[i]))
    return table


def _gradient(rows: Rows, f: np.ndarray, dim: int) -> np.ndarray:
    labels = gradient_labels(dim)
    return np.array([[point_rows[label].apply(f) for label in labels] for point_rows in rows])


def nse_projection_step(state: SimulationState, dt: float) -> SimulationState:
    """Chorin projection: implicit viscous predictor, pressure Poisson, correction."""
    step, t_new = state.step + 1, state.t + dt
    cloud = state.cloud
    fluid = state.fluid
    if cloud.dim != 2:
        raise ValueError("the projection step supports 2D clouds only")
    try:
        start = time.perf_counter()
        _advance_cloud(state, dt)
        v_n = cloud.v.copy()
        p_star = cloud.p.copy()
        nbhds = build_neighborhoods(cloud)
        cells = build_cells(cloud, nbhds)
        classical = [
            classical_operators(cloud, nb, weight_exponent=state.weight_exponent) for nb in nbhds
        ]
        if state.method == METHOD_FC:
            rows = [
                fc_operators_nse(cloud, nb, cell, v_n, classical=cl, weight_exponent=state.weight_exponent)
                for nb, cell, cl in zip(nbhds, cells, classical)
            ]
        else:
            rows = classical
        ops = StepOperators(nbhds, cells, classical, rows, time.perf_counter() - start)
        record = StepRecord(step=step, t=t_new, dt=dt, n_points=len(cloud), operator_seconds=ops.seconds)

        inv_dt = 1.0 / dt
        nu = fluid.eta / fluid.rho
        boundary_v = np.zeros_like(v_n)
        boundary = cloud.is_boundary
        if np.any(boundary):
            boundary_v[boundary] = state.boundary_velocity(cloud.x[boundary], cloud.kind[boundary], t_new)
        grad_p = _gradient(rows, p_star, cloud.dim)
        momentum = []
        for i, point_rows in enumerate(rows):
            row = point_rows[OperatorLabel.LAPLACIAN]
            momentum.append((np.append(row.members, i), np.append(-nu * row.coeffs, inv_dt)))

        v_star = np.empty_like(v_n)
        for k in range(cloud.dim):
            rhs = v_n[:, k] * inv_dt - grad_p[:, k] / fluid.rho + fluid.g[k]
            system = SparseSystem.from_rows(momentum, rhs)
            system = apply_boundary_rows(system, cloud, _momentum_bc(cloud, boundary_v, dt, k), classical)
            v_star[:, k] = _solve(system, v_n[:, k], state.solver, record)

        record.div_before = total_divergence(cells, rows, v_star)
        pressure = [
            (cl[OperatorLabel.LAPLACIAN].members, dt / fluid.rho * cl[OperatorLabel.LAPLACIAN].coeffs)
            for cl in classical
        ]
        system = SparseSystem.from_rows(pressure, divergence(rows, v_star))
        system = apply_boundary_rows(system, cloud, _pressure_bc(state, p_star, t_new, dt), classical)
        p_corr = _solve(system, np.zeros(len(cloud)), state.solver, record)

        v_new = v_star.copy()
        interior = ~boundary
        v_new[interior] -= dt / fluid.rho * _gradient(rows, p_corr, cloud.dim)[interior]
        reimposed = boundary & (cloud.kind != PointKind.OUTFLOW)
        v_new[reimposed] = boundary_v[reimposed]
        cloud.v = v_new
        cloud.p = p_star + p_corr

        record.div_after = total_divergence(cells, rows, v_new)
        record.eps_ddt = ddt_error(cloud, cells, rows, v_new)
        record.flux_in = boundary_flux(cloud, cells, v_new, kinds=[PointKind.INFLOW])
        record.flux_out = boundary_flux(cloud, cells, v_new, kinds=[PointKind.OUTFLOW])
        record.dropped_constraints = ops.dropped_constraints
    except FluxpointError as err:
        raise StepError(step, t_new, err) from err

    state.history.append(record)
    state.operators = ops
    state.step, state.t = step, t_new
    _LOGGER.info(
        "Step %d t=%.4g dt=%.3g: %d points, %d iterations, divergence %.3g -> %.3g",
        step, t_new, dt, record.n_points, record.iterations, record.div_before, record.div_after,
    )
    return state
