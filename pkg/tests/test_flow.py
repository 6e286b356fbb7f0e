"""Tests for Yamabe flow integration and its residual checks."""

import logging
import math

import numpy as np
import pytest
from pydantic import ValidationError

from core.conformal import (
    make_background,
    make_metric,
    mean_scalar,
    scalar_curvature,
    volume,
)
from core.flow import (
    FlowAbortError,
    FlowConfigError,
    dr_dt_residual,
    drifts,
    initial_state,
    rhs_normalized,
    rhs_unnormalized,
    run_flow,
    scalar_evolution_residual,
    scalar_evolution_rhs,
    stability_dt,
    step,
    total_scalar_dissipation_residual,
    volume_rate_residual,
)
from core.grid import constant_field, coordinates, random_smooth_field
from models.conformal import BackgroundKind
from models.flow import MONITOR_COLUMNS, FlowConfig, FlowMode, Stepper
from models.grid import ScalarField
from tests.conftest import sine_field


def _two_mode_field(grid):
    x1 = coordinates(grid)[0]
    return ScalarField(grid, 1.0 + 0.1 * np.sin(2 * np.pi * x1) + 0.05 * np.cos(6 * np.pi * x1))


def _config(mode, dt, horizon, **kwargs):
    return FlowConfig(mode=mode, dt=dt, horizon=horizon, **kwargs)


class TestFlowConfig:
    """Tests for FlowConfig validation."""

    def test_defaults(self):
        """Test defaults and the derived step count."""
        cfg = _config(FlowMode.NORMALIZED, 1e-3, 0.5)

        assert cfg.stepper is Stepper.EXPLICIT_RK4
        assert cfg.monitor_stride == 1
        assert cfg.step_count == 500

    def test_dt_must_be_below_horizon(self):
        """Test dt ≥ T is refused."""
        with pytest.raises(ValidationError, match="smaller than the horizon"):
            _config(FlowMode.NORMALIZED, 0.5, 0.5)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"dt": 0.0},
            {"monitor_stride": 0},
            {"stability_safety": 1.5},
            {"snapshot_times": (2.0,)},
            {"unknown": 1},
        ],
        ids=["zero-dt", "zero-stride", "safety-above-one", "snapshot-beyond-horizon", "unknown-key"],
    )
    def test_invalid_settings_rejected(self, kwargs):
        """Test invalid settings fail validation."""
        settings = {"mode": "normalized", "dt": 1e-3, "horizon": 1.0, **kwargs}
        with pytest.raises(ValidationError):
            FlowConfig(**settings)


class TestRightHandSides:
    """Tests for the flow right-hand sides."""

    @pytest.mark.parametrize("mode", ["normalized", "unnormalized"])
    def test_flat_unit_factor_is_fixed(self, flat16, grid16, mode):
        """Test u ≡ 1 over FLAT is a fixed point."""
        m = make_metric(flat16, constant_field(grid16, 1.0))
        rhs = rhs_normalized(m, 0.0) if mode == "normalized" else rhs_unnormalized(m)

        np.testing.assert_allclose(rhs.values, 0.0, atol=1e-12)

    def test_constant_curvature_is_normalized_fixed_point(self, grid16):
        """Test R ≡ r makes the normalized right-hand side vanish."""
        bg = make_background(grid16, BackgroundKind.SYNTHETIC, r0=constant_field(grid16, 2.0))
        m = make_metric(bg, constant_field(grid16, 1.3))

        np.testing.assert_allclose(rhs_normalized(m, mean_scalar(m)).values, 0.0, atol=1e-12)

    def test_negative_curvature_expands(self, grid16):
        """Test R₀ ≡ -1, u ≡ 1 gives ∂ₜu ≡ (n-2)/4 without normalization."""
        bg = make_background(grid16, BackgroundKind.SYNTHETIC, r0=constant_field(grid16, -1.0))
        m = make_metric(bg, constant_field(grid16, 1.0))

        np.testing.assert_allclose(rhs_unnormalized(m).values, 0.25, atol=1e-12)

    def test_modes_differ_by_mean_curvature_term(self, flat16, grid16):
        """Test rhs_unnormalized = rhs_normalized + ((n-2)/4) r u."""
        m = make_metric(flat16, random_smooth_field(grid16, np.random.default_rng(0)))
        r = mean_scalar(m)

        expected = rhs_normalized(m, r).values + 0.25 * r * m.u.values

        np.testing.assert_allclose(rhs_unnormalized(m).values, expected, rtol=1e-12, atol=1e-10)

    def test_difference_quotient_converges_at_first_order(self, flat_slab, slab_grid):
        """Test (u(dt) - u)/dt approaches the right-hand side like O(dt)."""
        m = make_metric(flat_slab, sine_field(slab_grid, 0.1))
        state = initial_state(m)
        rhs = rhs_normalized(m, mean_scalar(m)).values

        errors = []
        for dt in (1e-5, 5e-6):
            advanced = step(state, _config(FlowMode.NORMALIZED, dt, 1.0))
            quotient = (advanced.u.values - m.u.values) / dt
            errors.append(np.max(np.abs(quotient - rhs)))

        assert math.log2(errors[0] / errors[1]) >= 0.9


class TestStep:
    """Tests for single time steps."""

    @pytest.mark.parametrize("stepper", list(Stepper), ids=[s.value for s in Stepper])
    @pytest.mark.parametrize("mode", list(FlowMode), ids=[m.value for m in FlowMode])
    def test_fixed_point_is_unchanged(self, flat16, grid16, stepper, mode):
        """Test u ≡ 1 over FLAT survives a step unchanged."""
        state = initial_state(make_metric(flat16, constant_field(grid16, 1.0)))

        advanced = step(state, _config(mode, 1e-4, 1.0, stepper=stepper))

        np.testing.assert_allclose(advanced.u.values, 1.0, atol=1e-14)
        assert advanced.t == pytest.approx(1e-4)

    def test_rk4_local_error_order(self, flat_slab, slab_grid):
        """Test Richardson differences of one RK4 step shrink at order ≥ 3.5."""
        state = initial_state(make_metric(flat_slab, _two_mode_field(slab_grid)))

        def advance(dt, count):
            current = state
            cfg = _config(FlowMode.NORMALIZED, dt, 1.0)
            for _ in range(count):
                current = step(current, cfg)
            return current.u.values

        dt = 1e-4
        u1, u2, u4 = advance(dt, 1), advance(dt / 2, 2), advance(dt / 4, 4)
        e1 = np.max(np.abs(u1 - u2))
        e2 = np.max(np.abs(u2 - u4))

        assert math.log2(e1 / e2) >= 3.5

    def test_normalized_step_preserves_volume(self, flat_slab, slab_grid):
        """Test Vol is invariant across one normalized step."""
        state = initial_state(make_metric(flat_slab, sine_field(slab_grid, 0.1)))

        advanced = step(state, _config(FlowMode.NORMALIZED, 1e-4, 1.0))

        assert advanced.volume == pytest.approx(state.volume, rel=1e-9)

    def test_cached_monitors_match_recomputation(self, flat_slab, slab_grid):
        """Test the state caches agree with direct evaluation."""
        state = step(
            initial_state(make_metric(flat_slab, sine_field(slab_grid, 0.1))),
            _config(FlowMode.UNNORMALIZED, 1e-4, 1.0),
        )

        assert state.volume == pytest.approx(volume(state.metric), rel=1e-10)
        assert state.r == pytest.approx(mean_scalar(state.metric), rel=1e-10)
        np.testing.assert_allclose(state.scalar.values, scalar_curvature(state.metric).values, rtol=1e-10)

    def test_negative_stage_aborts(self, flat16, grid16):
        """Test a wildly unstable step aborts with a location."""
        u = random_smooth_field(grid16, np.random.default_rng(1), amplitude=0.3)
        state = initial_state(make_metric(flat16, u))

        with pytest.raises(FlowAbortError) as excinfo:
            for _ in range(5):
                state = step(state, _config(FlowMode.UNNORMALIZED, 0.05, 1.0))

        assert excinfo.value.location is not None
        assert len(excinfo.value.location) == 3


class TestStabilityGuard:
    """Tests for the RK4 stability estimate."""

    def test_estimate_scales_with_resolution_and_factor(self, grid8, grid16):
        """Test the estimate shrinks with h² and with small u."""
        flat8 = make_background(grid8, BackgroundKind.FLAT)
        flat16 = make_background(grid16, BackgroundKind.FLAT)

        coarse = stability_dt(make_metric(flat8, constant_field(grid8, 1.0)))
        fine = stability_dt(make_metric(flat16, constant_field(grid16, 1.0)))
        small = stability_dt(make_metric(flat16, constant_field(grid16, 0.5)))

        assert coarse == pytest.approx(4.0 * fine)
        assert small == pytest.approx(fine * 0.5**4)

    def test_run_warns_when_dt_exceeds_estimate(self, flat16, grid16, caplog):
        """Test an oversized dt is reported but not adapted."""
        caplog.set_level(logging.WARNING)
        limit = stability_dt(make_metric(flat16, constant_field(grid16, 1.0)))
        cfg = _config(FlowMode.NORMALIZED, 2.0 * limit, 4.0 * limit)

        series = run_flow(constant_field(grid16, 1.0), flat16, cfg)

        assert series.completed
        assert any("stability estimate" in record.message for record in caplog.records)


class TestRunFlow:
    """Tests for full runs."""

    def test_fixed_point_monitors_stay_constant(self, grid8):
        """Test u ≡ 1 over FLAT keeps volume 1 and r 0 up to T = 0.5."""
        bg = make_background(grid8, BackgroundKind.FLAT)
        cfg = _config(FlowMode.NORMALIZED, 5e-4, 0.5, monitor_stride=100)

        series = run_flow(constant_field(grid8, 1.0), bg, cfg)

        assert series.completed
        assert len(series.samples) == 11
        np.testing.assert_allclose(series.column("volume"), 1.0, rtol=1e-12)
        np.testing.assert_allclose(series.column("r"), 0.0, atol=1e-10)
        np.testing.assert_allclose(np.diff(series.times()), 0.05)

    def test_normalized_run_decreases_r_and_keeps_volume(self, flat_slab, slab_grid):
        """Test r(t) is nonincreasing and Vol stays fixed."""
        cfg = _config(FlowMode.NORMALIZED, 1e-4, 0.05)

        series = run_flow(sine_field(slab_grid, 0.1), flat_slab, cfg)
        r = series.column("r")

        assert np.all(np.diff(r) <= 1e-10 * max(1.0, abs(r[0])))
        assert r[-1] < r[0]
        assert drifts(series)["volume_drift"] <= 1e-6

    def test_unnormalized_run_dissipates_total_scalar(self, flat_slab, slab_grid):
        """Test ∫R dvol decreases at the rate -((n-2)/2)∫R² dvol."""
        cfg = _config(FlowMode.UNNORMALIZED, 1e-4, 0.05)

        series = run_flow(sine_field(slab_grid, 0.1), flat_slab, cfg)

        assert np.all(np.diff(series.column("total_scalar")) <= 1e-10)
        assert total_scalar_dissipation_residual(series) <= 1e-3
        assert volume_rate_residual(series) <= 1e-3

    def test_semi_implicit_agrees_with_rk4_under_refinement(self, flat_slab, slab_grid):
        """Test the w-form run approaches the u-form run as dt shrinks."""
        u0 = sine_field(slab_grid, 0.1)
        horizon = 0.01
        reference = run_flow(
            u0, flat_slab, _config(FlowMode.NORMALIZED, 5e-5, horizon, snapshot_times=(horizon,))
        ).snapshots[-1].u.values

        differences = []
        for dt in (2e-4, 1e-4):
            cfg = _config(
                FlowMode.NORMALIZED, dt, horizon, stepper=Stepper.SEMI_IMPLICIT, snapshot_times=(horizon,)
            )
            final = run_flow(u0, flat_slab, cfg).snapshots[-1].u.values
            differences.append(np.max(np.abs(final - reference)))

        assert differences[1] < differences[0] / 1.5

    def test_runs_are_deterministic(self, flat_slab, slab_grid):
        """Test identical inputs give identical series."""
        cfg = _config(FlowMode.NORMALIZED, 1e-4, 0.005, snapshot_stride=10)
        u0 = sine_field(slab_grid, 0.1)

        first = run_flow(u0, flat_slab, cfg)
        second = run_flow(u0, flat_slab, cfg)

        assert first.samples == second.samples
        assert [s.t for s in first.snapshots] == [s.t for s in second.snapshots]
        for a, b in zip(first.snapshots, second.snapshots):
            assert np.array_equal(a.u.values, b.u.values)

    def test_snapshot_schedule(self, flat_slab, slab_grid):
        """Test snapshots follow the stride and the explicit times."""
        cfg = _config(
            FlowMode.NORMALIZED, 1e-4, 0.002, monitor_stride=2, snapshot_stride=5, snapshot_times=(3e-4,)
        )

        series = run_flow(sine_field(slab_grid, 0.1), flat_slab, cfg)

        assert [round(s.t, 10) for s in series.snapshots] == [0.0, 3e-4, 1e-3, 2e-3]
        assert series.snapshot_at(1e-3) is not None
        assert series.snapshot_at(5e-4) is None
        assert len(series.samples) == 11

    def test_series_metadata(self, grid16):
        """Test the series records background and reference volume."""
        bg = make_background(grid16, BackgroundKind.SYNTHETIC, r0=constant_field(grid16, -1.0))

        series = run_flow(constant_field(grid16, 1.0), bg, _config(FlowMode.UNNORMALIZED, 1e-4, 3e-4))

        assert series.background_kind is BackgroundKind.SYNTHETIC
        assert series.r0_min == series.r0_max == -1.0
        assert series.reference_volume == pytest.approx(1.0)
        assert MONITOR_COLUMNS[0] == "t"

    def test_abort_keeps_partial_series(self, flat16, grid16):
        """Test an abort carries t, location, u_min history and samples so far."""
        u0 = random_smooth_field(grid16, np.random.default_rng(2), amplitude=0.3)
        cfg = _config(FlowMode.NORMALIZED, 0.05, 1.0)

        with pytest.raises(FlowAbortError) as excinfo:
            run_flow(u0, flat16, cfg)

        error = excinfo.value
        assert error.series is not None
        assert not error.series.completed
        assert error.series.samples[0].t == 0.0
        assert error.u_min_history[0] == pytest.approx(u0.min)
        assert error.series.abort_reason == str(error)


class TestResiduals:
    """Tests for the discrete identity residuals."""

    def test_fixed_point_residuals_vanish(self, grid8):
        """Test residuals are zero along the flat fixed point."""
        bg = make_background(grid8, BackgroundKind.FLAT)
        cfg = _config(FlowMode.NORMALIZED, 5e-4, 2.5e-3, snapshot_stride=1)

        series = run_flow(constant_field(grid8, 1.0), bg, cfg)

        assert dr_dt_residual(series) < 1e-12
        assert scalar_evolution_residual(series, bg, cfg) < 1e-12

    def test_dr_dt_residual_converges(self, flat_slab, slab_grid):
        """Test the dr/dt identity residual is small and shrinks under refinement."""
        u0 = sine_field(slab_grid, 0.1)

        coarse = run_flow(u0, flat_slab, _config(FlowMode.NORMALIZED, 1e-4, 0.005))
        fine = run_flow(u0, flat_slab, _config(FlowMode.NORMALIZED, 5e-5, 0.005))

        assert dr_dt_residual(coarse) <= 1e-2
        assert dr_dt_residual(fine) <= dr_dt_residual(coarse) / 3.0
        measured = np.diff(coarse.column("r")) / coarse.sample_spacing
        assert np.all(measured <= 1e-10)

    def test_scalar_evolution_residual_converges(self, flat_slab, slab_grid):
        """Test ∂ₜR matches (n-1)Δ_g R + R(R - r) along the run."""
        u0 = sine_field(slab_grid, 0.05)
        residuals = []
        for dt in (5e-5, 2.5e-5):
            cfg = _config(FlowMode.NORMALIZED, dt, 10 * dt, snapshot_stride=1)
            residuals.append(scalar_evolution_residual(run_flow(u0, flat_slab, cfg), flat_slab, cfg))

        assert residuals[0] <= 5e-3
        assert residuals[1] <= residuals[0] / 3.0

    def test_modes_differ_by_r_times_R(self, flat16, grid16):
        """Test the two evolution right-hand sides differ by r·R."""
        m = make_metric(flat16, random_smooth_field(grid16, np.random.default_rng(3)))
        R = scalar_curvature(m).values

        difference = (
            scalar_evolution_rhs(m, FlowMode.UNNORMALIZED).values
            - scalar_evolution_rhs(m, FlowMode.NORMALIZED).values
        )

        np.testing.assert_allclose(difference, mean_scalar(m) * R, atol=1e-10 * max(1.0, np.max(R**2)))

    def test_wrong_mode_rejected(self, flat_slab, slab_grid):
        """Test residuals refuse series of the other mode."""
        series = run_flow(
            sine_field(slab_grid, 0.1), flat_slab, _config(FlowMode.UNNORMALIZED, 1e-4, 5e-4)
        )

        with pytest.raises(FlowConfigError, match="normalized"):
            dr_dt_residual(series)

    def test_too_few_snapshots_rejected(self, flat_slab, slab_grid):
        """Test the scalar evolution residual needs three snapshots."""
        cfg = _config(FlowMode.NORMALIZED, 1e-4, 5e-4)
        series = run_flow(sine_field(slab_grid, 0.1), flat_slab, cfg)

        with pytest.raises(FlowConfigError, match="snapshots"):
            scalar_evolution_residual(series, flat_slab, cfg)
