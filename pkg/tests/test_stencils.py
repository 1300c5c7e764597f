"""Tests for the GFDM stencil builders."""

import math

import numpy as np
import pytest

from fluxpoint.cells import build_control_cell
from fluxpoint.cloud import Neighborhood, PointCloud, build_neighborhoods, discretize_domain
from fluxpoint.domain import Box
from fluxpoint.errors import IllConditioned, InsufficientSupport
from fluxpoint.stencils import (
    ConstraintSystem,
    MonomialBasis,
    OperatorLabel,
    classical_operators,
    consistency_system,
    fc_operators_advdiff,
    fc_operators_nse,
    flux_rhs_F,
    flux_rhs_G,
    interpolation_coefficients,
    min_norm_solve,
    weight,
)

DX, DY, LAP = OperatorLabel.DX, OperatorLabel.DY, OperatorLabel.LAPLACIAN


def _make_local_cloud(x: np.ndarray, h: float) -> tuple[PointCloud, Neighborhood]:
    """Cloud whose first point owns a support made of every point."""
    cloud = PointCloud.from_arrays(x, h)
    d = np.linalg.norm(x - x[0], axis=1)
    order = np.argsort(d, kind="stable")
    return cloud, Neighborhood(owner=0, members=order, distances=d[order])


def _make_random_support(center=(0.3, -0.2), h=0.3, count=20, seed=5):
    rng = np.random.default_rng(seed)
    radius = 0.85 * h * np.sqrt(rng.uniform(0.0, 1.0, count))
    angle = rng.uniform(0.0, 2.0 * math.pi, count)
    offsets = np.column_stack((radius * np.cos(angle), radius * np.sin(angle)))
    x = np.vstack((center, np.asarray(center) + offsets))
    return _make_local_cloud(x, h)


def _quadratic(a):
    def f(x):
        return a[0] + a[1] * x[:, 0] + a[2] * x[:, 1] + a[3] * x[:, 0] ** 2 + a[4] * x[:, 0] * x[:, 1] + a[5] * x[:, 1] ** 2

    def derivatives(p):
        return {
            DX: a[1] + 2.0 * a[3] * p[0] + a[4] * p[1],
            DY: a[2] + a[4] * p[0] + 2.0 * a[5] * p[1],
            LAP: 2.0 * a[3] + 2.0 * a[5],
        }

    return f, derivatives


def _make_cross(d: float = 0.1, h: float = 0.2) -> PointCloud:
    x = np.array([[0.0, 0.0], [d, 0.0], [-d, 0.0], [0.0, d], [0.0, -d]])
    return PointCloud.from_arrays(x, h)


def _make_square_operators(h: float = 0.25):
    cloud = discretize_domain(Box((0.0, 0.0), (1.0, 1.0)), h, seed=7)
    nbhds = build_neighborhoods(cloud)
    interior = np.flatnonzero(~cloud.is_boundary)
    i = int(interior[len(interior) // 2])
    cell = build_control_cell(cloud, nbhds[i], i)
    return cloud, nbhds[i], cell


class TestWeight:
    def test_values(self):
        origin = np.zeros(2)
        assert weight(origin, 1.0, np.zeros(2), 1.0) == pytest.approx(1.0)
        assert weight(origin, 1.0, np.array([math.sqrt(0.5), 0.0]), 1.0) == pytest.approx(math.exp(-1.0))
        assert weight(origin, 1.0, np.array([1.0, 0.0]), 1.0) == pytest.approx(math.exp(-2.0))

    def test_vectorized(self):
        w = weight(np.zeros(2), 1.0, np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([1.0, 1.0]))
        assert np.allclose(w, [1.0, math.exp(-2.0)])


class TestMonomialBasis:
    def test_counts(self):
        assert MonomialBasis(2).count == 6
        assert MonomialBasis(3).count == 10

    def test_constant_first(self):
        assert MonomialBasis(2).monomials[0] == (0, 0)
        assert MonomialBasis(3).monomials[0] == (0, 0, 0)

    def test_laplacian_rhs(self):
        basis = MonomialBasis(2)
        rhs = dict(zip(basis.monomials, basis.laplacian_at_origin()))
        assert rhs[(2, 0)] == 2.0 and rhs[(0, 2)] == 2.0
        assert sum(rhs.values()) == 4.0

    def test_unsupported_dim(self):
        with pytest.raises(ValueError, match="dim must be 2 or 3"):
            MonomialBasis(1)


class TestMinNormSolve:
    def test_single_row(self):
        system = ConstraintSystem(K=np.array([[1.0, 1.0]]), b=np.array([2.0]), W=np.ones(2))
        assert np.allclose(min_norm_solve(system), [1.0, 1.0])

    def test_square_identity(self):
        system = ConstraintSystem(K=np.eye(3), b=np.array([1.0, 2.0, 3.0]), W=np.array([0.5, 1.0, 2.0]))
        assert np.allclose(min_norm_solve(system), [1.0, 2.0, 3.0])

    def test_matches_kkt_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            K = rng.normal(size=(7, 20))
            b = rng.normal(size=7)
            W = rng.uniform(0.5, 1.5, size=20)
            kkt = np.block([[np.diag(2.0 * W), K.T], [K, np.zeros((7, 7))]])
            expected = np.linalg.solve(kkt, np.concatenate((np.zeros(20), b)))[:20]
            assert np.allclose(min_norm_solve(ConstraintSystem(K, b, W)), expected, atol=1e-8)

    def test_dependent_rows(self):
        K = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
        with pytest.raises(IllConditioned):
            min_norm_solve(ConstraintSystem(K, np.array([1.0, 2.0]), np.ones(3)))

    def test_zero_row(self):
        K = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
        with pytest.raises(IllConditioned, match="inf"):
            min_norm_solve(ConstraintSystem(K, np.array([1.0, 0.0]), np.ones(3)))

    def test_weights_positive(self):
        with pytest.raises(ValueError, match="positive"):
            ConstraintSystem(np.eye(2), np.ones(2), np.array([1.0, 0.0]))


class TestClassicalOperators:
    def test_laplacian_on_grid(self):
        grid = np.array([[a, b] for a in (-0.1, 0.0, 0.1) for b in (-0.1, 0.0, 0.1)])
        x = np.vstack((grid[4], np.delete(grid, 4, axis=0)))
        cloud, nbhd = _make_local_cloud(x, 0.2)
        rows = classical_operators(cloud, nbhd)
        f = x[:, 0] ** 2 + x[:, 1] ** 2
        assert rows[LAP].apply(f) == pytest.approx(4.0, abs=1e-9)
        assert rows[DX].apply(x[:, 0]) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("weight_exponent", [1, -1])
    def test_reproduces_quadratics(self, weight_exponent):
        cloud, nbhd = _make_random_support()
        rows = classical_operators(cloud, nbhd, weight_exponent=weight_exponent)
        rng = np.random.default_rng(2)
        for _ in range(5):
            f, derivatives = _quadratic(rng.normal(size=6))
            expected = derivatives(cloud.x[0])
            for label in (DX, DY, LAP):
                assert rows[label].apply(f(cloud.x)) == pytest.approx(expected[label], abs=1e-8)

    def test_diffusion_row_with_constant_alpha(self):
        cloud, nbhd = _make_random_support()
        rows = classical_operators(cloud, nbhd, alpha=np.full(len(cloud), 0.4))
        f, derivatives = _quadratic([1.0, -2.0, 0.5, 3.0, 1.0, -1.0])
        assert rows[OperatorLabel.DIFFUSION].apply(f(cloud.x)) == pytest.approx(0.4 * derivatives(cloud.x[0])[LAP], abs=1e-8)

    def test_diffusion_row_with_linear_alpha(self):
        cloud, nbhd = _make_random_support()
        alpha = 1.0 + cloud.x[:, 0]
        rows = classical_operators(cloud, nbhd, alpha=alpha)
        # div((1 + x) grad(x^2)) = 2 + 4x
        value = rows[OperatorLabel.DIFFUSION].apply(cloud.x[:, 0] ** 2)
        assert value == pytest.approx(2.0 + 4.0 * cloud.x[0, 0], abs=1e-8)

    def test_unscaling_law(self):
        cloud, nbhd = _make_random_support(center=(0.0, 0.0), h=0.3)
        scaled, scaled_nbhd = _make_local_cloud(3.0 * cloud.x, 0.9)
        rows = classical_operators(cloud, nbhd)
        scaled_rows = classical_operators(scaled, scaled_nbhd)
        assert np.allclose(scaled_rows[DX].coeffs, rows[DX].coeffs / 3.0, rtol=1e-9, atol=1e-12)
        assert np.allclose(scaled_rows[LAP].coeffs, rows[LAP].coeffs / 9.0, rtol=1e-9, atol=1e-12)

    def test_insufficient_support(self):
        cloud, nbhd = _make_local_cloud(np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1]]), 0.3)
        with pytest.raises(InsufficientSupport, match="point 0 has 4"):
            classical_operators(cloud, nbhd)

    def test_dz_needs_3d(self):
        cloud, nbhd = _make_random_support()
        with pytest.raises(ValueError, match="Dz"):
            consistency_system(cloud, nbhd, OperatorLabel.DZ)


class TestInterpolation:
    def test_partition_of_unity(self):
        cloud, _ = _make_random_support()
        coeffs = interpolation_coefficients(np.array([0.32, -0.18]), 0.3, cloud.x, cloud.h)
        assert coeffs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_reproduces_quadratic_value(self):
        cloud, _ = _make_random_support()
        f, _ = _quadratic([0.5, 1.0, -1.0, 2.0, 0.3, -0.7])
        x_new = np.array([[0.35, -0.25]])
        coeffs = interpolation_coefficients(x_new[0], 0.3, cloud.x, cloud.h)
        assert coeffs @ f(cloud.x) == pytest.approx(float(f(x_new)[0]), abs=1e-9)


class TestFluxRhs:
    def test_face_average_of_linear_field(self):
        cloud = _make_cross()
        nbhds = build_neighborhoods(cloud, required=1)
        cell = build_control_cell(cloud, nbhds[0], 0)
        assert flux_rhs_F(cell, cloud.x[:, 0], 0) == pytest.approx(1.0)
        assert flux_rhs_F(cell, cloud.x[:, 0], 1) == pytest.approx(0.0, abs=1e-12)
        assert flux_rhs_F(cell, np.full(5, 3.0), 0) == pytest.approx(0.0, abs=1e-12)

    def test_two_point_diffusion_flux(self):
        cloud = _make_cross()
        nbhds = build_neighborhoods(cloud, required=1)
        cell = build_control_cell(cloud, nbhds[0], 0)
        phi = cloud.x[:, 0] ** 2 + cloud.x[:, 1] ** 2
        assert flux_rhs_G(cell, phi, np.ones(5), []) == pytest.approx(4.0)
        assert flux_rhs_G(cell, phi, np.full(5, 0.5), []) == pytest.approx(2.0)


class TestFluxConservingOperators:
    def test_advdiff_constraints_satisfied(self):
        cloud, nbhd, cell = _make_square_operators()
        rng = np.random.default_rng(3)
        phi = rng.normal(size=len(cloud))
        alpha = np.ones(len(cloud))
        classical = classical_operators(cloud, nbhd, alpha=alpha)
        rows = fc_operators_advdiff(cloud, nbhd, cell, phi, alpha, classical=classical)
        grad_rows = [classical[DX], classical[DY]]

        target = flux_rhs_G(cell, phi, alpha, grad_rows)
        assert rows[OperatorLabel.DIFFUSION].apply(phi) == pytest.approx(target, abs=1e-8 * (1.0 + abs(target)))
        for k, label in enumerate((DX, DY)):
            target = flux_rhs_F(cell, phi, k)
            assert rows[label].apply(phi) == pytest.approx(target, abs=1e-8 * (1.0 + abs(target)))
        assert all(row.constrained and row.dropped_constraints == 0 for row in rows.values())

    def test_advdiff_keeps_consistency(self):
        cloud, nbhd, cell = _make_square_operators()
        phi = np.random.default_rng(4).normal(size=len(cloud))
        rows = fc_operators_advdiff(cloud, nbhd, cell, phi, np.ones(len(cloud)))
        x, y = cloud.x[:, 0], cloud.x[:, 1]
        i = nbhd.owner
        assert rows[DX].apply(x) == pytest.approx(1.0, abs=1e-8)
        assert rows[DX].apply(y) == pytest.approx(0.0, abs=1e-8)
        assert rows[DY].apply(x * y) == pytest.approx(x[i], abs=1e-8)
        assert rows[OperatorLabel.DIFFUSION].apply(x**2 + y**2) == pytest.approx(4.0, abs=1e-7)

    def test_nse_constraints_satisfied(self):
        cloud, nbhd, cell = _make_square_operators()
        rng = np.random.default_rng(6)
        v = rng.normal(size=(len(cloud), 2))
        classical = classical_operators(cloud, nbhd)
        rows = fc_operators_nse(cloud, nbhd, cell, v, classical=classical)
        for k, label in enumerate((DX, DY)):
            for field in (v[:, k], v[:, k] * v[:, 0], v[:, k] * v[:, 1]):
                target = flux_rhs_F(cell, field, k)
                assert rows[label].apply(field) == pytest.approx(target, abs=1e-8 * (1.0 + abs(target)))
        for k in range(2):
            target = flux_rhs_G(cell, v[:, k], np.ones(len(cloud)), [classical[DX], classical[DY]])
            assert rows[LAP].apply(v[:, k]) == pytest.approx(target, abs=1e-8 * (1.0 + abs(target)))
        assert sum(row.dropped_constraints for row in rows.values()) == 0

    def test_nse_zero_velocity_falls_back_to_classical(self):
        cloud, nbhd, cell = _make_square_operators()
        classical = classical_operators(cloud, nbhd)
        rows = fc_operators_nse(cloud, nbhd, cell, np.zeros((len(cloud), 2)), classical=classical)
        assert rows[DX].dropped_constraints == 3
        assert rows[LAP].dropped_constraints == 2
        for label in (DX, DY, LAP):
            assert not rows[label].constrained
            assert np.allclose(rows[label].coeffs, classical[label].coeffs, rtol=1e-12, atol=0.0)
