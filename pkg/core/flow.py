"""
Time integration of the normalized and unnormalized Yamabe flows.

The conformal factor evolves as ∂ₜu = -((n-2)/4)(R(g) - r)u (normalized)
or ∂ₜu = -((n-2)/4) R(g) u (unnormalized). The explicit stepper integrates
this form with classical RK4; the semi-implicit stepper works in
w = u^{(n+2)/(n-2)}, treating a frozen-coefficient flat Laplacian implicitly.
Every step refreshes the curvature monitors on the same quadrature the
identities are checked against.
"""

import logging
from collections import deque
from typing import Iterable, Optional, Union

import numpy as np

from core.conformal import (
    critical_exponent,
    curvature_exponent,
    laplace_beltrami_of_metric,
    make_metric,
    scalar_curvature_values,
    volume_exponent,
)
from core.constants import (
    ABORT_HISTORY_LENGTH,
    DEFAULT_STABILITY_SAFETY,
    POSITIVITY_FLOOR,
    RESIDUAL_FLOOR,
    RK4_STABILITY_RADIUS,
)
from core.grid import (
    MethodLike,
    dealias_values,
    helmholtz_solve_values,
    integrate_values,
    laplacian_values,
)
from core.logger import bind, setup_logger
from models.conformal import Background, ConformalMetric
from models.flow import (
    FlowConfig,
    FlowMode,
    FlowState,
    Snapshot,
    Stepper,
    TimeSeries,
)
from models.grid import ScalarField

__all__ = [
    "FlowConfigError",
    "FlowAbortError",
    "rhs_normalized",
    "rhs_unnormalized",
    "initial_state",
    "step",
    "stability_dt",
    "run_flow",
    "scalar_evolution_rhs",
    "scalar_evolution_residual",
    "dr_dt_residual",
    "total_scalar_dissipation_residual",
    "volume_rate_residual",
    "drifts",
]

_logger: Optional[logging.Logger] = None


def _get_logger() -> logging.Logger:
    """Get or create the module logger."""
    global _logger
    if _logger is None:
        _logger = setup_logger("Flow")
    return _logger


class FlowConfigError(Exception):
    """
    Exception raised when a series cannot support a requested check.

    Covers residuals asked of the wrong flow mode and series without
    enough samples or snapshots.
    """

    pass


class FlowAbortError(Exception):
    """
    Exception raised when a run leaves the positive, finite regime.

    Attributes:
        t: Time of the state that failed
        location: Grid index of the offending node
        u_min_history: Most recent u_min values before the failure
        series: Partial TimeSeries recorded up to the failure
    """

    def __init__(
        self,
        message: str,
        t: float,
        location: Optional[tuple[int, ...]] = None,
        u_min_history: Iterable[float] = (),
        series: Optional[TimeSeries] = None,
    ) -> None:
        super().__init__(message)
        self.t = t
        self.location = location
        self.u_min_history = list(u_min_history)
        self.series = series


def _check_positive(u: np.ndarray, t: float) -> None:
    """Abort unless every node is finite and above the positivity floor."""
    bad = ~np.isfinite(u)
    if bad.any():
        location = tuple(int(i) for i in np.unravel_index(np.argmax(bad), u.shape))
        raise FlowAbortError(f"non-finite conformal factor at t={t:.6g}, node {location}", t, location)
    if u.min() <= POSITIVITY_FLOOR:
        location = tuple(int(i) for i in np.unravel_index(np.argmin(u), u.shape))
        raise FlowAbortError(
            f"conformal factor {u.min():.3e} below positivity floor at t={t:.6g}, node {location}",
            t,
            location,
        )


def _flow_coefficient(n: int) -> float:
    return -(n - 2.0) / 4.0


def _mean_of(bg: Background, u: np.ndarray, R: np.ndarray) -> float:
    density = u ** volume_exponent(bg.dimension) * bg.vol_weights.values
    return integrate_values(bg.grid, R * density) / integrate_values(bg.grid, density)


def _rhs_values(
    bg: Background,
    u: np.ndarray,
    mode: FlowMode,
    method: MethodLike,
    dealias: bool,
    t: float,
) -> np.ndarray:
    _check_positive(u, t)
    R = scalar_curvature_values(bg, u, method)
    if dealias:
        R = dealias_values(bg.grid, R)
    if mode is FlowMode.NORMALIZED:
        # r is taken from the stage value, not frozen per step.
        return _flow_coefficient(bg.dimension) * (R - _mean_of(bg, u, R)) * u
    return _flow_coefficient(bg.dimension) * R * u


def rhs_normalized(m: ConformalMetric, r: float, method: MethodLike = "spectral") -> ScalarField:
    """∂ₜu = -((n-2)/4)(R(g) - r)u for the given mean curvature r."""
    R = scalar_curvature_values(m.background, m.u.values, method)
    return m.u.with_values(_flow_coefficient(m.background.dimension) * (R - r) * m.u.values)


def rhs_unnormalized(m: ConformalMetric, method: MethodLike = "spectral") -> ScalarField:
    """∂ₜu = -((n-2)/4) R(g) u."""
    R = scalar_curvature_values(m.background, m.u.values, method)
    return m.u.with_values(_flow_coefficient(m.background.dimension) * R * m.u.values)


def _make_state(bg: Background, u: np.ndarray, t: float, method: MethodLike) -> FlowState:
    grid = bg.grid
    R = scalar_curvature_values(bg, u, method)
    if not np.all(np.isfinite(R)):
        location = tuple(int(i) for i in np.unravel_index(np.argmax(~np.isfinite(R)), R.shape))
        raise FlowAbortError(f"non-finite scalar curvature at t={t:.6g}, node {location}", t, location)
    density = u ** volume_exponent(grid.dimension) * bg.vol_weights.values
    vol = integrate_values(grid, density)
    total = integrate_values(grid, R * density)
    r = total / vol
    return FlowState(
        t=t,
        metric=ConformalMetric(bg, ScalarField(grid, u)),
        scalar=ScalarField(grid, R),
        r=r,
        volume=vol,
        total_scalar=total,
        scalar_sq_integral=integrate_values(grid, R * R * density),
        scalar_dev_sq_integral=integrate_values(grid, (R - r) ** 2 * density),
    )


def initial_state(metric: ConformalMetric, method: MethodLike = "spectral", t: float = 0.0) -> FlowState:
    """State with monitors computed from ``metric``."""
    return _make_state(metric.background, np.array(metric.u.values), t, method)


def _rk4_values(state: FlowState, cfg: FlowConfig) -> np.ndarray:
    bg = state.metric.background
    u = state.u.values
    dt = cfg.dt
    t = state.t

    def f(x: np.ndarray, at: float) -> np.ndarray:
        return _rhs_values(bg, x, cfg.mode, cfg.method, cfg.dealias, at)

    k1 = f(u, t)
    k2 = f(u + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(u + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(u + dt * k3, t + dt)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _semi_implicit_values(state: FlowState, cfg: FlowConfig) -> np.ndarray:
    """
    One linearly implicit Euler step in w = u^p.

    w⁺ = (I - dt·A·Δ)⁻¹ [w + dt (p u^{p-1} ∂ₜu - A Δw)], where A bounds the
    leading diffusion coefficient (n-1)(u·w_conf)^{-q} from above.
    """
    bg = state.metric.background
    grid = bg.grid
    n = grid.dimension
    p = critical_exponent(n)
    q = curvature_exponent(n)
    u = state.u.values
    dt = cfg.dt

    udot = _rhs_values(bg, u, cfg.mode, cfg.method, cfg.dealias, state.t)
    w = u**p
    forcing = p * u ** (p - 1.0) * udot
    A = (n - 1.0) * float(np.max((u * bg.conformal_to_flat.values) ** -q))
    rhs = w + dt * (forcing - A * laplacian_values(grid, w, "spectral"))
    w_new = helmholtz_solve_values(grid, rhs, dt * A)
    _check_positive(w_new, state.t + dt)
    return w_new ** (1.0 / p)


def _advance(state: FlowState, cfg: FlowConfig, t_new: float) -> FlowState:
    if cfg.stepper is Stepper.EXPLICIT_RK4:
        u_new = _rk4_values(state, cfg)
    else:
        u_new = _semi_implicit_values(state, cfg)
    _check_positive(u_new, t_new)
    return _make_state(state.metric.background, u_new, t_new, cfg.method)


def step(state: FlowState, cfg: FlowConfig) -> FlowState:
    """
    Advance one time step.

    Raises:
        FlowAbortError: If a stage or the new state leaves the positive, finite regime.
    """
    return _advance(state, cfg, state.t + cfg.dt)


def stability_dt(metric: ConformalMetric, safety: float = DEFAULT_STABILITY_SAFETY) -> float:
    """
    Largest RK4 step the linearized flow tolerates at this metric.

    The leading part of the flow is (n-1)(u·w)^{-q} Δ_flat, whose spectrum
    reaches down to -(n-1)·max((u·w)^{-q})·Σ(π/h_k)².
    """
    bg = metric.background
    n = bg.dimension
    v = metric.u.values * bg.conformal_to_flat.values
    coefficient = (n - 1.0) * float(np.max(v ** -curvature_exponent(n)))
    k_max_sq = sum((np.pi / h) ** 2 for h in bg.grid.spacing)
    return safety * RK4_STABILITY_RADIUS / (coefficient * k_max_sq)


def _check_stability(
    state: FlowState, cfg: FlowConfig, logger: Union[logging.Logger, logging.LoggerAdapter]
) -> None:
    limit = stability_dt(state.metric, cfg.stability_safety)
    if cfg.dt > limit:
        logger.warning(
            f"dt={cfg.dt:.3e} exceeds the RK4 stability estimate {limit:.3e} at t={state.t:.6g}"
        )


def run_flow(
    u0: ScalarField,
    bg: Background,
    cfg: FlowConfig,
    label: Optional[str] = None,
) -> TimeSeries:
    """
    Integrate the flow from u0 up to the configured horizon.

    Samples are taken at t_k = k·dt for every ``monitor_stride``-th step,
    starting with t = 0. The result is deterministic in its inputs.

    Args:
        u0: Positive initial conformal factor
        bg: Background geometry
        cfg: Time-integration settings
        label: Context tag prefixed to log lines (e.g. "member 3")

    Returns:
        TimeSeries: Monitors and requested snapshots on [0, T]

    Raises:
        ConformalError: If u0 is not positive.
        FlowAbortError: On a positivity or finiteness breach; carries the
            partial series.
    """
    logger = bind(_get_logger(), label) if label else _get_logger()
    state = initial_state(make_metric(bg, u0), cfg.method)
    grid = bg.grid
    series = TimeSeries(
        dimension=grid.dimension,
        mode=cfg.mode,
        dt=cfg.dt,
        monitor_stride=cfg.monitor_stride,
        background_kind=bg.kind,
        r0_min=bg.r0.min,
        r0_max=bg.r0.max,
        reference_volume=integrate_values(grid, bg.vol_weights.values),
        label=label or "",
    )
    history: deque[float] = deque(maxlen=ABORT_HISTORY_LENGTH)
    snapshot_steps = {round(t / cfg.dt) for t in cfg.snapshot_times}
    snapshot_every = cfg.monitor_stride * cfg.snapshot_stride

    def record(k: int, current: FlowState) -> None:
        history.append(current.u_min)
        if k % cfg.monitor_stride == 0:
            series.samples.append(current.sample())
        if k in snapshot_steps or (snapshot_every and k % snapshot_every == 0):
            series.snapshots.append(Snapshot(current.t, current.u))

    steps = cfg.step_count
    record(0, state)
    logger.info(
        f"Flow start: {cfg.mode.value}, {cfg.stepper.value}, dt={cfg.dt:g}, {steps} steps, "
        f"r={state.r:.6g}, volume={state.volume:.6g}"
    )

    for k in range(1, steps + 1):
        if cfg.stepper is Stepper.EXPLICIT_RK4 and (k - 1) % cfg.restabilize_every == 0:
            _check_stability(state, cfg, logger)
        try:
            state = _advance(state, cfg, k * cfg.dt)
        except FlowAbortError as e:
            e.u_min_history = list(history)
            e.series = series
            series.abort_reason = str(e)
            logger.error(f"Flow aborted: {e}; recent u_min {[f'{v:.3e}' for v in history]}")
            raise
        record(k, state)
        if k % cfg.restabilize_every == 0:
            logger.debug(f"t={state.t:.6g} r={state.r:.6g} u_min={state.u_min:.6g}")

    series.completed = True
    logger.info(
        f"Flow finished at t={state.t:.6g}: r={state.r:.6g}, volume={state.volume:.6g}, "
        f"u in [{state.u_min:.6g}, {state.u_max:.6g}]"
    )
    return series


def scalar_evolution_rhs(
    metric: ConformalMetric, mode: Union[FlowMode, str], method: MethodLike = "spectral"
) -> ScalarField:
    """
    Right-hand side of the scalar curvature evolution.

    (n-1)Δ_g R + R(R - r) for the normalized flow, (n-1)Δ_g R + R² otherwise.
    """
    bg = metric.background
    n = bg.dimension
    R = scalar_curvature_values(bg, metric.u.values, method)
    lap = laplace_beltrami_of_metric(metric, metric.u.with_values(R), method).values
    if FlowMode(mode) is FlowMode.NORMALIZED:
        return metric.u.with_values((n - 1.0) * lap + R * (R - _mean_of(bg, metric.u.values, R)))
    return metric.u.with_values((n - 1.0) * lap + R * R)


def scalar_evolution_residual(series: TimeSeries, bg: Background, cfg: FlowConfig) -> float:
    """
    Sup residual of the scalar curvature evolution along stored snapshots.

    For every three consecutive, equally spaced snapshots the central
    difference of R is compared with ``scalar_evolution_rhs`` at the middle
    one; the worst residual is normalized by sup|R| + 1.

    Raises:
        FlowConfigError: If fewer than three equally spaced snapshots exist
            or the series was run in another mode.
    """
    if cfg.mode is not series.mode:
        raise FlowConfigError(f"series is {series.mode.value}, config is {cfg.mode.value}")
    snaps = series.snapshots
    worst: Optional[float] = None
    for before, middle, after in zip(snaps, snaps[1:], snaps[2:]):
        h = middle.t - before.t
        if h <= 0 or abs((after.t - middle.t) - h) > 1e-9 * h:
            continue
        R_before = scalar_curvature_values(bg, before.u.values, cfg.method)
        R_after = scalar_curvature_values(bg, after.u.values, cfg.method)
        metric = make_metric(bg, middle.u)
        R_middle = scalar_curvature_values(bg, middle.u.values, cfg.method)
        measured = (R_after - R_before) / (2.0 * h)
        expected = scalar_evolution_rhs(metric, series.mode, cfg.method).values
        residual = float(np.max(np.abs(measured - expected))) / (float(np.max(np.abs(R_middle))) + 1.0)
        worst = residual if worst is None else max(worst, residual)
    if worst is None:
        raise FlowConfigError("scalar evolution residual needs three equally spaced snapshots")
    return worst


def _central_difference(values: np.ndarray, spacing: float) -> np.ndarray:
    return (values[2:] - values[:-2]) / (2.0 * spacing)


def _relative_residual(measured: np.ndarray, expected: np.ndarray) -> float:
    return float(np.max(np.abs(measured - expected) / (np.abs(expected) + RESIDUAL_FLOOR)))


def _require(series: TimeSeries, mode: FlowMode, check: str) -> None:
    if series.mode is not mode:
        raise FlowConfigError(f"{check} needs a {mode.value} series, got {series.mode.value}")
    if len(series.samples) < 3:
        raise FlowConfigError(f"{check} needs at least 3 samples, got {len(series.samples)}")


def dr_dt_residual(series: TimeSeries) -> float:
    """
    Residual of dr/dt = -((n-2)/2) Vol⁻¹ ∫(R - r)² dvol at interior samples.

    Raises:
        FlowConfigError: If the series is not normalized or too short.
    """
    _require(series, FlowMode.NORMALIZED, "dr/dt residual")
    n = series.dimension
    measured = _central_difference(series.column("r"), series.sample_spacing)
    expected = (
        -((n - 2.0) / 2.0)
        * series.column("scalar_dev_sq_integral")[1:-1]
        / series.column("volume")[1:-1]
    )
    return _relative_residual(measured, expected)


def total_scalar_dissipation_residual(series: TimeSeries) -> float:
    """Residual of d/dt ∫R dvol = -((n-2)/2) ∫R² dvol for an unnormalized series."""
    _require(series, FlowMode.UNNORMALIZED, "dissipation residual")
    n = series.dimension
    measured = _central_difference(series.column("total_scalar"), series.sample_spacing)
    expected = -((n - 2.0) / 2.0) * series.column("scalar_sq_integral")[1:-1]
    return _relative_residual(measured, expected)


def volume_rate_residual(series: TimeSeries) -> float:
    """Residual of dVol/dt = -(n/2) ∫R dvol for an unnormalized series."""
    _require(series, FlowMode.UNNORMALIZED, "volume rate residual")
    n = series.dimension
    measured = _central_difference(series.column("volume"), series.sample_spacing)
    expected = -(n / 2.0) * series.column("total_scalar")[1:-1]
    return _relative_residual(measured, expected)


def drifts(series: TimeSeries) -> dict[str, float]:
    """Relative volume drift and worst monotone-monitor increase of a series."""
    volumes = series.column("volume")
    watched = series.column("r" if series.mode is FlowMode.NORMALIZED else "total_scalar")
    increase = float(np.max(np.diff(watched))) if len(watched) > 1 else 0.0
    return {
        "volume_drift": float(np.max(np.abs(volumes - volumes[0])) / volumes[0]),
        "monotone_increase": max(increase, 0.0),
    }
