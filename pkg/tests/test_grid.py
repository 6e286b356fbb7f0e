"""Tests for periodic grids, flat operators and quadrature."""

import math

import numpy as np
import pytest
from scipy.special import beta

from core.grid import (
    GridError,
    bump_field,
    constant_field,
    coordinates,
    dealias,
    field_metrics,
    grad_squared_flat,
    grad_dot_flat,
    gradient_flat,
    integrate,
    laplacian_flat,
    make_field,
    make_grid,
    random_smooth_field,
)
from models.grid import ScalarField

# Low modes (entries in {-1, 0, 1}) with fixed coefficients; no Nyquist content.
_MODES = [
    ((1, 0, 0), 0.7, 0.3),
    ((0, 1, 0), -0.4, 1.1),
    ((1, 1, 0), 0.25, 2.0),
    ((0, 1, -1), 0.5, -0.6),
    ((1, -1, 1), -0.3, 0.9),
]


def _band_limited(grid) -> ScalarField:
    """Evaluate a fixed band-limited function on any unit-period 3-grid."""
    x = coordinates(grid)
    values = np.full(grid.shape, 0.2)
    for mode, coeff, phase in _MODES:
        arg = sum(2.0 * np.pi * k * xk for k, xk in zip(mode, x))
        values = values + coeff * np.cos(arg + phase)
    return ScalarField(grid, values)


def _rel_sup_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


class TestMakeGrid:
    """Tests for make_grid validation."""

    def test_smallest_supported_case(self):
        """Test a 16³ unit torus is accepted."""
        grid = make_grid(3, [16, 16, 16], [1, 1, 1])

        assert grid.dimension == 3
        assert grid.shape == (16, 16, 16)
        assert grid.flat_volume == pytest.approx(1.0)
        assert grid.cell_volume == pytest.approx(1.0 / 16**3)

    def test_four_torus_echoes_parameters(self):
        """Test an anisotropic 4-torus echoes its parameters."""
        grid = make_grid(4, [8, 8, 8, 8], [1, 2, 1, 2])

        assert grid.nodes_per_axis == (8, 8, 8, 8)
        assert grid.periods == (1.0, 2.0, 1.0, 2.0)
        assert grid.spacing == (0.125, 0.25, 0.125, 0.25)

    def test_scalar_arguments_are_broadcast(self):
        """Test scalar node counts and periods apply to every axis."""
        grid = make_grid(3, 16, 2.0)

        assert grid.nodes_per_axis == (16, 16, 16)
        assert grid.periods == (2.0, 2.0, 2.0)

    def test_dimension_below_three_rejected(self):
        """Test a 2-torus is rejected with a clear message."""
        with pytest.raises(GridError) as exc_info:
            make_grid(2, [16, 16], [1, 1])

        assert "dimension below 3" in str(exc_info.value)

    @pytest.mark.parametrize(
        "nodes,periods",
        [
            ([16, 4, 16], [1, 1, 1]),
            ([16, 16, 16], [1, 0, 1]),
            ([16, 16, 16], [1, -2, 1]),
            ([16, 16], [1, 1, 1]),
        ],
        ids=["too_few_nodes", "zero_period", "negative_period", "axis_count_mismatch"],
    )
    def test_invalid_parameters_rejected(self, nodes, periods):
        """Test invalid node counts and periods raise GridError."""
        with pytest.raises(GridError):
            make_grid(3, nodes, periods)

    def test_grid_is_hashable_and_comparable(self):
        """Test equal grids compare and hash equal (used as cache keys)."""
        a = make_grid(3, 16, 1.0)
        b = make_grid(3, [16, 16, 16], [1, 1, 1])

        assert a == b
        assert hash(a) == hash(b)


class TestScalarField:
    """Tests for ScalarField construction."""

    def test_values_are_read_only(self, grid16):
        """Test field values cannot be mutated in place."""
        field = constant_field(grid16, 1.0)

        with pytest.raises(ValueError):
            field.values[0, 0, 0] = 2.0

    def test_flat_values_are_reshaped_row_major(self, grid16):
        """Test a flat value vector is laid out in C order."""
        flat = np.arange(grid16.node_count, dtype=float)
        field = make_field(grid16, flat)

        assert field.values[0, 0, 1] == 1.0
        assert field.values[0, 1, 0] == 16.0
        assert field.values[1, 0, 0] == 256.0

    def test_wrong_value_count_rejected(self, grid16):
        """Test a value count different from the node count is rejected."""
        with pytest.raises(GridError):
            make_field(grid16, np.ones(10))

    def test_non_finite_values_rejected(self, grid16):
        """Test NaN values are rejected."""
        values = np.ones(grid16.shape)
        values[3, 3, 3] = np.nan

        with pytest.raises(GridError):
            make_field(grid16, values)


class TestLaplacianFlat:
    """Tests for laplacian_flat."""

    @pytest.mark.parametrize("method", ["spectral", "fd"])
    def test_constant_is_harmonic(self, grid16, method):
        """Test constants have zero Laplacian in both modes."""
        result = laplacian_flat(constant_field(grid16, 3.5), method=method)

        assert np.max(np.abs(result.values)) < 1e-10

    def test_fourier_eigenfunction(self):
        """Test sin(2πx₁/L₁) is an eigenfunction with eigenvalue -(2π/L₁)²."""
        grid = make_grid(3, [16, 8, 8], [2.0, 1.0, 1.0])
        x1 = coordinates(grid)[0]
        f = ScalarField(grid, np.sin(2.0 * np.pi * x1 / 2.0))

        result = laplacian_flat(f)

        np.testing.assert_allclose(result.values, -(np.pi**2) * f.values, atol=1e-10)

    def test_spectral_matches_fine_fd_oracle(self):
        """Test the spectral Laplacian matches 4th-order FD at 4x resolution."""
        coarse = make_grid(3, 32, 1.0)
        fine = make_grid(3, 128, 1.0)

        spectral = laplacian_flat(_band_limited(coarse)).values
        oracle = laplacian_flat(_band_limited(fine), method="fd").values[::4, ::4, ::4]

        assert _rel_sup_error(spectral, oracle) <= 1e-6

    def test_fd_converges_at_fourth_order(self):
        """Test FD error against the exact Laplacian shrinks at order >= 3.5."""
        errors = []
        for m in (16, 32):
            grid = make_grid(3, [m, m, 8], [1, 1, 1])
            x1, x2, _ = coordinates(grid)
            f = ScalarField(grid, np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2))
            exact = -2.0 * (2 * np.pi) ** 2 * f.values
            errors.append(np.max(np.abs(laplacian_flat(f, method="fd").values - exact)))

        assert math.log2(errors[0] / errors[1]) >= 3.5


class TestGradients:
    """Tests for grad_squared_flat and related gradient helpers."""

    def test_constant_has_zero_gradient(self, grid16):
        """Test constants have zero squared gradient."""
        result = grad_squared_flat(constant_field(grid16, -2.0))

        assert np.max(np.abs(result.values)) < 1e-20

    def test_single_mode_closed_form(self):
        """Test |∇ sin(2πx₁/L₁)|² = (2π/L₁)² cos²(2πx₁/L₁)."""
        grid = make_grid(3, [16, 8, 8], [0.5, 1.0, 1.0])
        x1 = coordinates(grid)[0]
        arg = 2.0 * np.pi * x1 / 0.5
        f = ScalarField(grid, np.sin(arg))

        result = grad_squared_flat(f)

        np.testing.assert_allclose(result.values, (4.0 * np.pi) ** 2 * np.cos(arg) ** 2, atol=1e-9)

    def test_spectral_matches_fine_fd_oracle(self):
        """Test the spectral squared gradient matches FD at 4x resolution."""
        coarse = make_grid(3, 32, 1.0)
        fine = make_grid(3, 128, 1.0)

        spectral = grad_squared_flat(_band_limited(coarse)).values
        oracle = grad_squared_flat(_band_limited(fine), method="fd").values[::4, ::4, ::4]

        assert _rel_sup_error(spectral, oracle) <= 1e-6

    def test_grad_dot_is_symmetric_and_matches_components(self, grid16):
        """Test ⟨∇f,∇g⟩ agrees with the component-wise product."""
        rng = np.random.default_rng(3)
        f = random_smooth_field(grid16, rng, max_mode=2)
        g = random_smooth_field(grid16, rng, max_mode=2)

        dot = grad_dot_flat(f, g).values
        components = sum(a.values * b.values for a, b in zip(gradient_flat(f), gradient_flat(g)))

        np.testing.assert_allclose(dot, grad_dot_flat(g, f).values, atol=1e-12)
        np.testing.assert_allclose(dot, components, atol=1e-12)


class TestIntegrate:
    """Tests for quadrature."""

    def test_unit_torus_volume(self, grid16):
        """Test ∫1 = 1 on the unit torus."""
        assert integrate(constant_field(grid16, 1.0)) == pytest.approx(1.0, rel=1e-14)

    def test_mean_zero_mode(self, grid16):
        """Test a single sine mode integrates to zero."""
        x1 = coordinates(grid16)[0]
        f = ScalarField(grid16, np.sin(2 * np.pi * x1))

        assert abs(integrate(f)) < 1e-14

    def test_product_of_squares_closed_form(self, grid16):
        """Test ∫cos²(2πx₁)cos²(2πx₂) = 1/4 on the unit 3-torus."""
        x1, x2, _ = coordinates(grid16)
        f = ScalarField(grid16, np.cos(2 * np.pi * x1) ** 2 * np.cos(2 * np.pi * x2) ** 2)
        fine = make_grid(3, 64, 1.0)
        y1, y2, _ = coordinates(fine)
        oracle = integrate(ScalarField(fine, np.cos(2 * np.pi * y1) ** 2 * np.cos(2 * np.pi * y2) ** 2))

        assert integrate(f) == pytest.approx(0.25, rel=1e-12)
        assert integrate(f) == pytest.approx(oracle, rel=1e-12)

    def test_weights_scale_the_measure(self, grid16):
        """Test a constant weight multiplies the integral."""
        weights = constant_field(grid16, 64.0)

        assert integrate(constant_field(grid16, 1.0), weights) == pytest.approx(64.0)

    def test_nonpositive_weight_rejected(self, grid16):
        """Test a zero weight is rejected."""
        values = np.ones(grid16.shape)
        values[0, 0, 0] = 0.0

        with pytest.raises(GridError):
            integrate(constant_field(grid16, 1.0), ScalarField(grid16, values))

    def test_grid_mismatch_rejected(self, grid16):
        """Test integrand and weights must share a grid."""
        other = make_grid(3, 8, 1.0)

        with pytest.raises(GridError):
            integrate(constant_field(grid16, 1.0), constant_field(other, 1.0))


class TestFieldMetrics:
    """Tests for field_metrics."""

    def test_identical_fields(self, grid16):
        """Test identical fields are at distance zero."""
        f = random_smooth_field(grid16, np.random.default_rng(0))

        result = field_metrics(f, f)

        assert result.sup_distance == 0.0
        assert result.l1_distance == 0.0
        assert result.lp_distance == 0.0
        assert result.p == pytest.approx(6.0)

    def test_constant_offset(self):
        """Test a constant offset c gives sup |c| and L¹ |c|·Vol₀."""
        grid = make_grid(3, [8, 8, 8], [1.0, 2.0, 1.5])
        f = random_smooth_field(grid, np.random.default_rng(1))
        g = f.with_values(f.values - 0.25)

        result = field_metrics(f, g)

        assert result.sup_distance == pytest.approx(0.25)
        assert result.l1_distance == pytest.approx(0.25 * 3.0)
        assert result.lp_distance == pytest.approx(0.25 * 3.0 ** (1 / 6))

    def test_grid_mismatch_rejected(self, grid16):
        """Test fields on different grids are rejected."""
        with pytest.raises(GridError):
            field_metrics(constant_field(grid16, 1.0), constant_field(make_grid(3, 8, 1.0), 1.0))

    def test_shrinking_bump_matches_volume_oracle(self):
        """Test fixed-height bumps keep sup 1 while the L⁶ norm follows the closed form."""
        grid = make_grid(3, 32, 1.0)
        zero = constant_field(grid, 0.0)
        p = 6.0
        lp_values = []
        for radius in (0.4, 0.3, 0.2):
            result = field_metrics(bump_field(grid, radius), zero)
            oracle = (4.0 * np.pi * radius**3 * 0.5 * beta(1.5, 4 * p + 1)) ** (1 / p)

            assert result.sup_distance == pytest.approx(1.0)
            assert result.lp_distance == pytest.approx(oracle, rel=0.05)
            lp_values.append(result.lp_distance)

        assert lp_values[0] > lp_values[1] > lp_values[2]


class TestOperatorInvariants:
    """Tests for the discrete divergence theorem and integration by parts."""

    @pytest.mark.parametrize("method", ["spectral", "fd"])
    def test_laplacian_integrates_to_zero(self, grid16, method):
        """Test ∫Δf vanishes on the closed torus."""
        f = random_smooth_field(grid16, np.random.default_rng(5), max_mode=3)
        bound = 1e-10 * np.max(np.abs(f.values)) * grid16.flat_volume

        assert abs(integrate(laplacian_flat(f, method=method))) <= bound

    def test_integration_by_parts(self, grid16):
        """Test ∫fΔg = -∫⟨∇f,∇g⟩ for band-limited fields."""
        rng = np.random.default_rng(11)
        f = random_smooth_field(grid16, rng, max_mode=3)
        g = random_smooth_field(grid16, rng, max_mode=3)

        lhs = integrate(f.with_values(f.values * laplacian_flat(g).values))
        rhs = -integrate(grad_dot_flat(f, g))

        assert lhs == pytest.approx(rhs, rel=1e-8)


class TestHelpers:
    """Tests for dealias and random field generation."""

    def test_dealias_keeps_low_and_removes_high_modes(self, grid16):
        """Test the 2/3 filter keeps mode 1 and removes mode 7."""
        x1 = coordinates(grid16)[0]
        low = np.cos(2 * np.pi * x1)
        high = np.cos(2 * np.pi * 7 * x1)

        result = dealias(ScalarField(grid16, low + high))

        np.testing.assert_allclose(result.values, low, atol=1e-12)

    def test_random_field_is_deterministic(self, grid16):
        """Test equal seeds give bit-identical fields."""
        a = random_smooth_field(grid16, np.random.default_rng(42), amplitude=0.3)
        b = random_smooth_field(grid16, np.random.default_rng(42), amplitude=0.3)

        assert np.array_equal(a.values, b.values)
        assert np.max(np.abs(a.values - 1.0)) == pytest.approx(0.3)

    def test_unresolved_mode_rejected(self):
        """Test modes at or beyond Nyquist are refused."""
        with pytest.raises(GridError):
            random_smooth_field(make_grid(3, 8, 1.0), np.random.default_rng(0), max_mode=4)
