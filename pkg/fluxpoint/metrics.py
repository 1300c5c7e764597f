"""Conservation and accuracy diagnostics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .cells import BOUNDARY, ControlCell
from .const import DIAGNOSTICS_HEADER, PointKind
from .stencils import OperatorLabel, StencilRow, gradient_labels

# per-step quantities integrated over time with the rectangle rule
_ACCUMULATED = ("flux_in", "flux_out", "adv_boundary_flux")


@dataclass
class StepRecord:
    step: int
    t: float
    dt: float
    eps_ddt: float = 0.0
    div_before: float = 0.0
    div_after: float = 0.0
    flux_in: float = 0.0
    flux_out: float = 0.0
    phi_integral: float = 0.0
    adv_boundary_flux: float = 0.0
    n_points: int = 0
    iterations: int = 0
    dropped_constraints: int = 0
    operator_seconds: float = 0.0
    solver_seconds: float = 0.0

    def csv_row(self) -> list:
        values = asdict(self)
        return [values[name] for name in DIAGNOSTICS_HEADER]


@dataclass
class StepHistory:
    initial_phi_integral: float = 0.0
    records: list[StepRecord] = field(default_factory=list)
    integrals: dict[str, float] = field(
        default_factory=lambda: {name: 0.0 for name in _ACCUMULATED}
    )

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: StepRecord) -> None:
        self.records.append(record)
        for name in _ACCUMULATED:
            self.integrals[name] += record.dt * getattr(record, name)

    @classmethod
    def replay(cls, records: Iterable[StepRecord], initial_phi_integral: float = 0.0):
        history = cls(initial_phi_integral=initial_phi_integral)
        for record in records:
            history.append(record)
        return history

    def mean(self, name: str) -> float:
        if not self.records:
            return 0.0
        return float(np.mean([getattr(r, name) for r in self.records]))

    def total(self, name: str) -> float:
        return float(sum(getattr(r, name) for r in self.records))


def domain_integral(cells: Sequence[ControlCell], f: np.ndarray) -> float:
    """Point quadrature sum V_i f_i."""
    return float(sum(cell.volume * f[cell.owner] for cell in cells))


def boundary_flux(
    cloud,
    cells: Sequence[ControlCell],
    w: np.ndarray,
    kinds: Optional[Iterable[PointKind]] = None,
) -> float:
    """Sum of A_i n_i . w_i over boundary faces of points of the given kinds."""
    selected = None if kinds is None else {int(k) for k in kinds}
    total = 0.0
    for cell in cells:
        i = cell.owner
        if selected is not None and int(cloud.kind[i]) not in selected:
            continue
        for face in cell.faces:
            if face.neighbor == BOUNDARY:
                total += face.area * float(face.normal @ w[i])
    return total


def divergence(rows: Sequence[dict[OperatorLabel, StencilRow]], v: np.ndarray) -> np.ndarray:
    labels = gradient_labels(v.shape[1])
    return np.array(
        [sum(point_rows[label].apply(v[:, k]) for k, label in enumerate(labels)) for point_rows in rows]
    )


def ddt_error(
    cloud,
    cells: Sequence[ControlCell],
    rows: Sequence[dict[OperatorLabel, StencilRow]],
    v: np.ndarray,
) -> float:
    """Violation of the discrete divergence theorem, per unit volume."""
    div = divergence(rows, v)
    volume = sum(cell.volume for cell in cells)
    inside = domain_integral(cells, div)
    return abs(inside - boundary_flux(cloud, cells, v)) / volume


def total_divergence(
    cells: Sequence[ControlCell],
    rows: Sequence[dict[OperatorLabel, StencilRow]],
    v: np.ndarray,
) -> float:
    div = divergence(rows, v)
    volume = sum(cell.volume for cell in cells)
    return domain_integral(cells, np.abs(div)) / volume


def energy_error(history: StepHistory) -> float:
    """Relative change of the phi integral not explained by boundary advection."""
    if history.initial_phi_integral == 0.0:
        raise ValueError("energy error is undefined for a zero initial integral")
    final = history.records[-1].phi_integral if history.records else history.initial_phi_integral
    drift = final - history.initial_phi_integral + history.integrals["adv_boundary_flux"]
    return abs(drift) / history.initial_phi_integral


def l2_velocity_error(v_num: np.ndarray, v_exact: np.ndarray) -> float:
    denominator = float(np.sum(v_exact**2))
    if denominator == 0.0:
        raise ValueError("L2 error is undefined for a zero exact solution")
    return math.sqrt(float(np.sum((v_num - v_exact) ** 2)) / denominator)


def mass_error(history: StepHistory) -> float:
    inflow = history.integrals["flux_in"]
    if inflow == 0.0:
        raise ValueError("mass error is undefined without inflow")
    return abs((inflow + history.integrals["flux_out"]) / inflow)


def convergence_rate(eps1: float, eps2: float, h1: float, h2: float) -> float:
    """Observed order between two refinement levels."""
    if min(eps1, eps2, h1, h2) <= 0.0:
        raise ValueError("convergence rate needs positive errors and lengths")
    return math.log(eps2 / eps1) / math.log(h2 / h1)
