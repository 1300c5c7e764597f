"""Tests for conservation and accuracy diagnostics."""

import math

import numpy as np
import pytest

from fluxpoint.cells import build_cells
from fluxpoint.cloud import CloudParams, PointCloud, build_neighborhoods, discretize_domain
from fluxpoint.const import DIAGNOSTICS_HEADER, PointKind
from fluxpoint.domain import Box
from fluxpoint.metrics import (
    StepHistory,
    StepRecord,
    boundary_flux,
    convergence_rate,
    ddt_error,
    domain_integral,
    energy_error,
    l2_velocity_error,
    mass_error,
    total_divergence,
)
from fluxpoint.stencils import classical_operators, fc_operators_nse


def _make_square(h: float = 0.125, kinds=None):
    cloud = discretize_domain(Box((0.0, 0.0), (1.0, 1.0), kinds=kinds or {}), h, seed=7)
    nbhds = build_neighborhoods(cloud)
    return cloud, nbhds, build_cells(cloud, nbhds)


def _make_ring():
    angles = 2.0 * math.pi * np.arange(8) / 8
    ring = np.column_stack((np.cos(angles), np.sin(angles)))
    cloud = PointCloud.from_arrays(
        np.vstack(([0.0, 0.0], ring)),
        2.5,
        kind=[PointKind.INTERIOR] + [PointKind.WALL] * 8,
        normal=np.vstack(([0.0, 0.0], ring)),
        params=CloudParams(beta=1.0),
    )
    nbhds = build_neighborhoods(cloud)
    return cloud, nbhds, build_cells(cloud, nbhds)


def _make_record(step: int, dt: float = 0.1, **values) -> StepRecord:
    return StepRecord(step=step, t=step * dt, dt=dt, **values)


class TestDomainIntegral:
    def test_unit_function(self):
        _, _, cells = _make_square(0.25)
        assert domain_integral(cells, np.ones(len(cells))) == pytest.approx(1.0, rel=0.05)

    def test_linear(self):
        _, _, cells = _make_square(0.25)
        rng = np.random.default_rng(0)
        f, g = rng.normal(size=len(cells)), rng.normal(size=len(cells))
        combined = domain_integral(cells, 2.0 * f - 3.0 * g)
        assert combined == pytest.approx(2.0 * domain_integral(cells, f) - 3.0 * domain_integral(cells, g), rel=1e-12, abs=1e-12)

    def test_zero(self):
        _, _, cells = _make_square(0.25)
        assert domain_integral(cells, np.zeros(len(cells))) == 0.0


class TestBoundaryFlux:
    def test_zero_field(self):
        cloud, _, cells = _make_square(0.25)
        assert boundary_flux(cloud, cells, np.zeros((len(cloud), 2))) == 0.0

    def test_constant_field_closes(self):
        cloud, _, cells = _make_square(0.25)
        w = np.tile([2.0, -1.0], (len(cloud), 1))
        assert boundary_flux(cloud, cells, w) == pytest.approx(0.0, abs=1e-12)

    def test_inflow_edge(self):
        cloud = discretize_domain(Box((0.0, 0.0), (1.0, 1.0), kinds={"left": PointKind.INFLOW}), 0.0625, seed=7)
        nbhds = build_neighborhoods(cloud)
        cells = build_cells(cloud, [nbhds[i] for i in np.flatnonzero(cloud.is_boundary)])
        w = np.tile([2.0, 0.0], (len(cloud), 1))
        flux = boundary_flux(cloud, cells, w, kinds=[PointKind.INFLOW])
        assert flux == pytest.approx(-2.0, rel=0.05)


class TestDivergence:
    def test_classical_linear_field(self):
        cloud, nbhds, cells = _make_square(0.25)
        rows = [classical_operators(cloud, nb) for nb in nbhds]
        v = np.column_stack((cloud.x[:, 0], -cloud.x[:, 1]))
        assert total_divergence(cells, rows, v) == pytest.approx(0.0, abs=1e-9)
        assert total_divergence(cells, rows, np.zeros_like(v)) == 0.0

    def test_ddt_error_zero_field(self):
        cloud, nbhds, cells = _make_square(0.25)
        rows = [classical_operators(cloud, nb) for nb in nbhds]
        assert ddt_error(cloud, cells, rows, np.zeros((len(cloud), 2))) == 0.0

    def test_ddt_error_vanishes_for_conservative_rows(self):
        cloud, nbhds, cells = _make_ring()
        v = np.random.default_rng(4).normal(size=(len(cloud), 2))
        rows = [fc_operators_nse(cloud, nb, cell, v) for nb, cell in zip(nbhds, cells)]
        assert ddt_error(cloud, cells, rows, v) <= 1e-9


class TestErrors:
    def test_l2_velocity_error(self):
        exact = np.random.default_rng(1).normal(size=(30, 2))
        assert l2_velocity_error(exact, exact) == 0.0
        assert l2_velocity_error(1.1 * exact, exact) == pytest.approx(0.1, abs=1e-12)
        with pytest.raises(ValueError, match="zero exact"):
            l2_velocity_error(exact, np.zeros_like(exact))

    def test_mass_error(self):
        balanced = StepHistory.replay([_make_record(k, flux_in=-2.0, flux_out=2.0) for k in range(1, 4)])
        assert mass_error(balanced) == pytest.approx(0.0)
        blocked = StepHistory.replay([_make_record(k, flux_in=-2.0) for k in range(1, 4)])
        assert mass_error(blocked) == pytest.approx(1.0)
        leaky = StepHistory.replay([_make_record(k, flux_in=-2.0, flux_out=1.98) for k in range(1, 4)])
        assert mass_error(leaky) == pytest.approx(0.01)

    def test_mass_error_without_inflow(self):
        with pytest.raises(ValueError, match="without inflow"):
            mass_error(StepHistory.replay([_make_record(1)]))

    def test_energy_error(self):
        records = [_make_record(1, phi_integral=10.0), _make_record(2, phi_integral=10.05)]
        assert energy_error(StepHistory.replay(records, initial_phi_integral=10.0)) == pytest.approx(0.005)

    def test_energy_error_counts_boundary_advection(self):
        # 0.5 of phi left through the boundary during one step of dt=0.1
        records = [_make_record(1, phi_integral=9.5, adv_boundary_flux=5.0)]
        assert energy_error(StepHistory.replay(records, initial_phi_integral=10.0)) == pytest.approx(0.0)

    def test_energy_error_zero_initial(self):
        with pytest.raises(ValueError, match="zero initial"):
            energy_error(StepHistory.replay([_make_record(1)]))

    @pytest.mark.parametrize(
        "eps1, eps2, h1, h2, expected",
        [
            (1e-2, 5e-3, 0.25, 0.125, 1.0),
            (1e-2, 2.5e-3, 0.25, 0.125, 2.0),
            (3.65e-4, 1.15e-4, 0.25, 0.125, 1.67),
        ],
    )
    def test_convergence_rate(self, eps1, eps2, h1, h2, expected):
        assert convergence_rate(eps1, eps2, h1, h2) == pytest.approx(expected, abs=0.01)

    def test_convergence_rate_needs_positive(self):
        with pytest.raises(ValueError, match="positive"):
            convergence_rate(0.0, 1e-3, 0.25, 0.125)


class TestStepHistory:
    def test_rectangle_rule(self):
        history = StepHistory.replay([_make_record(1, dt=0.1, flux_in=-2.0), _make_record(2, dt=0.2, flux_in=-1.0)])
        assert history.integrals["flux_in"] == pytest.approx(-0.4)

    def test_replay_identical(self):
        records = [_make_record(k, flux_in=-1.0 * k, flux_out=0.3 * k, eps_ddt=1e-3 / k) for k in range(1, 6)]
        first = StepHistory.replay(records, initial_phi_integral=1.0)
        second = StepHistory.replay(records, initial_phi_integral=1.0)
        assert first.integrals == second.integrals
        assert first.mean("eps_ddt") == second.mean("eps_ddt")

    def test_mean_and_total(self):
        history = StepHistory.replay([_make_record(1, iterations=3), _make_record(2, iterations=5)])
        assert history.mean("iterations") == 4.0
        assert history.total("iterations") == 8.0
        assert StepHistory().mean("eps_ddt") == 0.0

    def test_csv_row_order(self):
        row = _make_record(3, eps_ddt=1e-4, flux_in=-1.0).csv_row()
        assert len(row) == len(DIAGNOSTICS_HEADER)
        assert row[0] == 3
        assert row[DIAGNOSTICS_HEADER.index("flux_in")] == -1.0
