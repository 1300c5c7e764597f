"""Classical and flux-conserving GFDM stencils.

Every operator row is the weighted minimum-norm solution of a small
equality-constrained system: consistency rows reproduce the derivative of
every monomial up to second order, optional flux rows tie the row to a
control-cell flux balance of a given field.  Systems are set up in
shifted-scaled coordinates xi = (x_j - x_i)/h_i and unscaled afterwards.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, lapack

from .const import (
    CONSTRAINT_RTOL,
    DEFAULT_WEIGHT_EXPONENT,
    MONOMIAL_ORDER,
    PIVOT_RATIO_LIMIT,
)
from .errors import IllConditioned, InsufficientSupport

if TYPE_CHECKING:
    from .cells import ControlCell
    from .cloud import Neighborhood, PointCloud

_LOGGER = logging.getLogger(__name__)


class OperatorLabel(str, Enum):
    DX = "Dx"
    DY = "Dy"
    DZ = "Dz"
    LAPLACIAN = "Laplacian"
    DIFFUSION = "Diffusion"
    INTERPOLATE = "Interpolate"


GRADIENT_LABELS = (OperatorLabel.DX, OperatorLabel.DY, OperatorLabel.DZ)

# power of h removed when unscaling
_SCALE_POWER = {
    OperatorLabel.DX: 1,
    OperatorLabel.DY: 1,
    OperatorLabel.DZ: 1,
    OperatorLabel.LAPLACIAN: 2,
    OperatorLabel.DIFFUSION: 2,
    OperatorLabel.INTERPOLATE: 0,
}


def gradient_labels(dim: int) -> tuple[OperatorLabel, ...]:
    return GRADIENT_LABELS[:dim]


@dataclass(frozen=True)
class MonomialBasis:
    dim: int
    order: int = MONOMIAL_ORDER

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.order != MONOMIAL_ORDER:
            raise ValueError(f"only order {MONOMIAL_ORDER} is supported")

    @cached_property
    def monomials(self) -> tuple[tuple[int, ...], ...]:
        """Exponent tuples ordered by total degree, constant first."""
        exps = [
            e
            for e in itertools.product(range(self.order + 1), repeat=self.dim)
            if sum(e) <= self.order
        ]
        return tuple(sorted(exps, key=lambda e: (sum(e), tuple(-k for k in e))))

    @property
    def count(self) -> int:
        return len(self.monomials)

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        """Matrix of monomial values, one row per monomial, one column per point."""
        xi = np.atleast_2d(xi)
        return np.array([np.prod(xi**np.array(e), axis=1) for e in self.monomials])

    def gradient_at_origin(self, axis: int) -> np.ndarray:
        unit = tuple(int(k == axis) for k in range(self.dim))
        return np.array([float(e == unit) for e in self.monomials])

    def laplacian_at_origin(self) -> np.ndarray:
        squares = {tuple(2 * int(k == a) for k in range(self.dim)) for a in range(self.dim)}
        return np.array([2.0 if e in squares else 0.0 for e in self.monomials])

    def value_at_origin(self) -> np.ndarray:
        return np.array([float(sum(e) == 0) for e in self.monomials])


@dataclass
class ConstraintSystem:
    K: np.ndarray
    b: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        if np.any(self.W <= 0.0):
            raise ValueError("minimization weights must be positive")

    def with_row(self, row: np.ndarray, rhs: float) -> "ConstraintSystem":
        return ConstraintSystem(np.vstack((self.K, row)), np.append(self.b, rhs), self.W)


@dataclass
class StencilRow:
    owner: int
    members: np.ndarray
    coeffs: np.ndarray
    label: OperatorLabel
    constrained: bool = False
    dropped_constraints: int = 0

    def apply(self, values: np.ndarray):
        """Evaluate the operator on a nodal field (scalar or vector valued)."""
        return self.coeffs @ np.asarray(values)[self.members]


@dataclass
class FluxConstraint:
    """A flux-balance row: sum_j c_j f_j = rhs, in unscaled units."""

    values: np.ndarray
    rhs: float
    name: str = field(default="flux")


def weight(x_i: np.ndarray, h_i: float, x_j: np.ndarray, h_j) -> np.ndarray:
    """Gaussian weight exp(-4|x_j - x_i|^2 / (h_i^2 + h_j^2))."""
    d2 = np.sum((np.atleast_2d(x_j) - x_i) ** 2, axis=-1)
    w = np.exp(-4.0 * d2 / (h_i**2 + np.asarray(h_j) ** 2))
    return w if np.ndim(x_j) > 1 else float(w[0])


def _label_rhs(
    basis: MonomialBasis,
    label: OperatorLabel,
    h: float,
    alpha: float = 1.0,
    grad_alpha: Optional[np.ndarray] = None,
) -> np.ndarray:
    if label in GRADIENT_LABELS:
        axis = GRADIENT_LABELS.index(label)
        if axis >= basis.dim:
            raise ValueError(f"{label.value} requires dim > {axis}")
        return basis.gradient_at_origin(axis)
    if label is OperatorLabel.LAPLACIAN:
        return basis.laplacian_at_origin()
    if label is OperatorLabel.DIFFUSION:
        rhs = alpha * basis.laplacian_at_origin()
        if grad_alpha is not None:
            for axis in range(basis.dim):
                rhs = rhs + h * grad_alpha[axis] * basis.gradient_at_origin(axis)
        return rhs
    return basis.value_at_origin()


def _build_system(
    center: np.ndarray,
    h: float,
    x_members: np.ndarray,
    h_members: np.ndarray,
    rhs: np.ndarray,
    weight_exponent: int,
) -> ConstraintSystem:
    basis = MonomialBasis(len(center))
    if len(x_members) < basis.count:
        raise InsufficientSupport(-1, len(x_members), basis.count)
    xi = (x_members - center) / h
    w = weight(center, h, x_members, h_members) ** weight_exponent
    return ConstraintSystem(K=basis.evaluate(xi), b=np.asarray(rhs, dtype=float), W=w)


def consistency_system(
    cloud: "PointCloud",
    nbhd: "Neighborhood",
    label: OperatorLabel,
    alpha: float = 1.0,
    grad_alpha: Optional[np.ndarray] = None,
    weight_exponent: int = DEFAULT_WEIGHT_EXPONENT,
) -> ConstraintSystem:
    """Monomial reproduction rows for one operator at the owner of nbhd."""
    i = nbhd.owner
    basis = MonomialBasis(cloud.dim)
    if nbhd.count < basis.count:
        raise InsufficientSupport(i, nbhd.count, basis.count)
    rhs = _label_rhs(basis, label, cloud.h[i], alpha, grad_alpha)
    return _build_system(
        cloud.x[i], cloud.h[i], cloud.x[nbhd.members], cloud.h[nbhd.members], rhs, weight_exponent
    )


def _pivoted_cholesky(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Upper factor U and 0-based pivots with P^T M P = U^T U."""
    chol, piv, rank, _ = lapack.dpstrf(m, lower=0)
    size = len(m)
    diag = np.abs(np.diag(chol))
    if rank < size or diag[size - 1] == 0.0:
        raise IllConditioned(np.inf)
    ratio = float((diag[0] / diag[size - 1]) ** 2)
    if ratio > PIVOT_RATIO_LIMIT:
        raise IllConditioned(ratio)
    return np.triu(chol), piv - 1


def min_norm_solve(system: ConstraintSystem) -> np.ndarray:
    """argmin sum W_j c_j^2 subject to K c = b.

    Solved through c = D K^T y with (K D K^T) y = b and D = 1/W, after
    normalizing the rows of K.
    """
    K, b = system.K, system.b
    norms = np.linalg.norm(K, axis=1)
    if np.any(norms == 0.0):
        raise IllConditioned(np.inf)
    kn = K / norms[:, None]
    bn = b / norms
    d = 1.0 / system.W
    kd = kn * d
    upper, piv = _pivoted_cholesky(kd @ kn.T)

    def normal_solve(rhs: np.ndarray) -> np.ndarray:
        y = np.empty_like(rhs)
        y[piv] = cho_solve((upper, False), rhs[piv])
        return kd.T @ y

    coeffs = normal_solve(bn)
    coeffs = coeffs + normal_solve(bn - kn @ coeffs)

    residual = np.max(np.abs(K @ coeffs - b))
    if residual > CONSTRAINT_RTOL * (1.0 + np.max(np.abs(b))):
        ratio = float((np.abs(upper[0, 0]) / np.abs(upper[-1, -1])) ** 2)
        raise IllConditioned(ratio)
    return coeffs


def _solve_row(
    nbhd: "Neighborhood",
    h: float,
    label: OperatorLabel,
    system: ConstraintSystem,
    constraints: Sequence[FluxConstraint] = (),
) -> StencilRow:
    """Solve with greedy admission of flux rows, then unscale."""
    coeffs = min_norm_solve(system)
    power = _SCALE_POWER[label]
    admitted = dropped = 0
    for constraint in constraints:
        trial = system.with_row(constraint.values[nbhd.members], constraint.rhs * h**power)
        try:
            coeffs = min_norm_solve(trial)
        except IllConditioned as err:
            dropped += 1
            _LOGGER.debug(
                "Dropped %s constraint on %s at point %d (pivot ratio %.3g)",
                constraint.name,
                label.value,
                nbhd.owner,
                err.pivot_ratio,
            )
            continue
        system = trial
        admitted += 1
    return StencilRow(
        owner=nbhd.owner,
        members=nbhd.members,
        coeffs=coeffs / h**power,
        label=label,
        constrained=admitted > 0,
        dropped_constraints=dropped,
    )


def classical_operators(
    cloud: "PointCloud",
    nbhd: "Neighborhood",
    alpha: Optional[np.ndarray] = None,
    weight_exponent: int = DEFAULT_WEIGHT_EXPONENT,
) -> dict[OperatorLabel, StencilRow]:
    """Gradient and Laplacian rows; a Diffusion row too when alpha is given."""
    i = nbhd.owner
    rows = {
        label: _solve_row(
            nbhd, cloud.h[i], label, consistency_system(cloud, nbhd, label, weight_exponent=weight_exponent)
        )
        for label in (*gradient_labels(cloud.dim), OperatorLabel.LAPLACIAN)
    }
    if alpha is not None:
        system = _diffusion_system(cloud, nbhd, alpha, rows, weight_exponent)
        rows[OperatorLabel.DIFFUSION] = _solve_row(nbhd, cloud.h[i], OperatorLabel.DIFFUSION, system)
    return rows


def _diffusion_system(cloud, nbhd, alpha, grad_rows, weight_exponent) -> ConstraintSystem:
    alpha = np.asarray(alpha, dtype=float)
    grad_alpha = np.array([grad_rows[label].apply(alpha) for label in gradient_labels(cloud.dim)])
    return consistency_system(
        cloud,
        nbhd,
        OperatorLabel.DIFFUSION,
        alpha=float(alpha[nbhd.owner]),
        grad_alpha=grad_alpha,
        weight_exponent=weight_exponent,
    )


def interpolation_coefficients(
    x_new: np.ndarray,
    h: float,
    x_members: np.ndarray,
    h_members: np.ndarray,
    weight_exponent: int = DEFAULT_WEIGHT_EXPONENT,
) -> np.ndarray:
    """MLS coefficients reproducing every quadratic's value at x_new."""
    basis = MonomialBasis(len(x_new))
    system = _build_system(
        np.asarray(x_new, dtype=float), h, x_members, h_members, basis.value_at_origin(), weight_exponent
    )
    return min_norm_solve(system)


def _owner_faces(cell: "ControlCell"):
    return [face for face in cell.faces if face.neighbor < 0]


def _neighbor_faces(cell: "ControlCell"):
    return [face for face in cell.faces if face.neighbor >= 0]


def flux_rhs_F(cell: "ControlCell", f: np.ndarray, k: int) -> float:
    """Cell average of d f / d x_k from midpoint-averaged face fluxes.

    Boundary and surviving seed faces carry the owner value.
    """
    i = cell.owner
    total = 0.0
    for face in _neighbor_faces(cell):
        total += 0.5 * (f[i] + f[face.neighbor]) * face.normal[k] * face.area
    for face in _owner_faces(cell):
        total += f[i] * face.normal[k] * face.area
    return total / cell.volume


def flux_rhs_G(
    cell: "ControlCell",
    phi: np.ndarray,
    alpha: np.ndarray,
    grad_rows: Sequence[StencilRow],
) -> float:
    """Cell average of div(alpha grad phi) from two-point face fluxes."""
    i = cell.owner
    total = 0.0
    for face in _neighbor_faces(cell):
        l = face.neighbor
        alpha_il = 0.5 * (alpha[i] + alpha[l])
        total += alpha_il * (phi[l] - phi[i]) / face.distance * face.area
    owner_faces = _owner_faces(cell)
    if owner_faces:
        gradient = np.array([row.apply(phi) for row in grad_rows])
        for face in owner_faces:
            total += alpha[i] * float(face.normal @ gradient) * face.area
    return total / cell.volume


def fc_operators_advdiff(
    cloud: "PointCloud",
    nbhd: "Neighborhood",
    cell: "ControlCell",
    phi: np.ndarray,
    alpha: np.ndarray,
    classical: Optional[dict[OperatorLabel, StencilRow]] = None,
    weight_exponent: int = DEFAULT_WEIGHT_EXPONENT,
) -> dict[OperatorLabel, StencilRow]:
    """Gradient and Diffusion rows tied to the flux balance of phi on the cell."""
    i = nbhd.owner
    h = cloud.h[i]
    if classical is None:
        classical = classical_operators(cloud, nbhd, weight_exponent=weight_exponent)
    grad_rows = [classical[label] for label in gradient_labels(cloud.dim)]
    rows = {}
    for axis, label in enumerate(gradient_labels(cloud.dim)):
        system = consistency_system(cloud, nbhd, label, weight_exponent=weight_exponent)
        constraint = FluxConstraint(phi, flux_rhs_F(cell, phi, axis), "phi")
        rows[label] = _solve_row(nbhd, h, label, system, [constraint])
    system = _diffusion_system(cloud, nbhd, alpha, classical, weight_exponent)
    constraint = FluxConstraint(phi, flux_rhs_G(cell, phi, alpha, grad_rows), "diffusion")
    rows[OperatorLabel.DIFFUSION] = _solve_row(nbhd, h, OperatorLabel.DIFFUSION, system, [constraint])
    return rows


def fc_operators_nse(
    cloud: "PointCloud",
    nbhd: "Neighborhood",
    cell: "ControlCell",
    v: np.ndarray,
    classical: Optional[dict[OperatorLabel, StencilRow]] = None,
    weight_exponent: int = DEFAULT_WEIGHT_EXPONENT,
) -> dict[OperatorLabel, StencilRow]:
    """Gradient and Laplacian rows tied to velocity and momentum fluxes.

    Flux rows are admitted in order: the velocity component first, then the
    momentum products, so momentum rows are the first to go when the
    constraint set becomes dependent.
    """
    i = nbhd.owner
    h = cloud.h[i]
    dim = cloud.dim
    if classical is None:
        classical = classical_operators(cloud, nbhd, weight_exponent=weight_exponent)
    grad_rows = [classical[label] for label in gradient_labels(dim)]
    ones = np.ones(len(v))
    rows = {}
    for k, label in enumerate(gradient_labels(dim)):
        vk = v[:, k]
        constraints = [FluxConstraint(vk, flux_rhs_F(cell, vk, k), f"v{k}")]
        for kk in range(dim):
            product = vk * v[:, kk]
            constraints.append(FluxConstraint(product, flux_rhs_F(cell, product, k), f"v{k}v{kk}"))
        system = consistency_system(cloud, nbhd, label, weight_exponent=weight_exponent)
        rows[label] = _solve_row(nbhd, h, label, system, constraints)
    constraints = [
        FluxConstraint(v[:, k], flux_rhs_G(cell, v[:, k], ones, grad_rows), f"laplacian v{k}")
        for k in range(dim)
    ]
    system = consistency_system(cloud, nbhd, OperatorLabel.LAPLACIAN, weight_exponent=weight_exponent)
    rows[OperatorLabel.LAPLACIAN] = _solve_row(nbhd, h, OperatorLabel.LAPLACIAN, system, constraints)
    return rows
