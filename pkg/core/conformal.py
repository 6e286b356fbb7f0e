"""
Conformal class machinery over a periodic grid.

Every geometric quantity is evaluated in the flat chart: a background g₀ is
stored as g₀ = w^{4/(n-2)} g_flat (plus a zeroth-order potential for
synthetic backgrounds), so a metric g = u^{4/(n-2)} g₀ is the flat-chart
metric of the composed factor v = u·w. All integrals use the rectangle rule
of ``core.grid``.
"""

import logging
from typing import Optional, Union

import numpy as np

from core.executor import RunExecutor
from core.grid import (
    GridError,
    MethodLike,
    check_same_grid,
    constant_field,
    gradient_values,
    integrate_values,
    laplacian_values,
    random_smooth_field,
)
from core.logger import setup_logger
from models.conformal import (
    Background,
    BackgroundKind,
    ConformalMetric,
    YamabeEstimate,
    YamabeEstimateConfig,
)
from models.grid import GridSpec, ScalarField

__all__ = [
    "ConformalError",
    "conformal_constant",
    "critical_exponent",
    "curvature_exponent",
    "volume_exponent",
    "make_background",
    "make_metric",
    "laplacian_background",
    "scalar_curvature",
    "scalar_curvature_values",
    "laplace_beltrami_of_metric",
    "volume",
    "total_scalar",
    "dirichlet_total",
    "mean_scalar",
    "yamabe_quotient",
    "estimate_yamabe_constant",
]

_logger: Optional[logging.Logger] = None


def _get_logger() -> logging.Logger:
    """Get or create the module logger."""
    global _logger
    if _logger is None:
        _logger = setup_logger("Conformal")
    return _logger


class ConformalError(Exception):
    """
    Exception raised for invalid backgrounds and conformal factors.

    Covers nonpositive φ, a missing kind parameter and conformal factors
    at or below the positivity floor.
    """

    pass


def conformal_constant(n: int) -> float:
    """c_n = 4(n-1)/(n-2)."""
    return 4.0 * (n - 1) / (n - 2)


def critical_exponent(n: int) -> float:
    """p = (n+2)/(n-2)."""
    return (n + 2.0) / (n - 2.0)


def curvature_exponent(n: int) -> float:
    """q = 4/(n-2), the power relating g to u."""
    return 4.0 / (n - 2.0)


def volume_exponent(n: int) -> float:
    """2n/(n-2), the power of u in dvol_g."""
    return 2.0 * n / (n - 2.0)


def make_background(
    grid: GridSpec,
    kind: Union[BackgroundKind, str],
    *,
    phi: Optional[ScalarField] = None,
    r0: Optional[ScalarField] = None,
    provenance: str = "",
    method: MethodLike = "spectral",
) -> Background:
    """
    Build a reference geometry g₀.

    Args:
        grid: Periodic grid
        kind: FLAT, CONFORMALLY_FLAT (needs ``phi``) or SYNTHETIC (needs ``r0``)
        phi: Positive conformal factor over the flat torus
        r0: Prescribed scalar curvature of a synthetic background
        provenance: Free text stored with the background
        method: Derivative method used for R₀ of a conformally flat background

    Returns:
        Background: g₀ with its curvature and volume density

    Raises:
        ConformalError: If the kind parameter is missing or φ is not positive.
    """
    kind = BackgroundKind(kind)
    n = grid.dimension
    ones = constant_field(grid, 1.0)
    zeros = constant_field(grid, 0.0)

    if kind is BackgroundKind.FLAT:
        return Background(grid, kind, zeros, ones, ones, zeros, provenance=provenance)

    if kind is BackgroundKind.SYNTHETIC:
        if r0 is None:
            raise ConformalError("synthetic background needs a prescribed R0 field")
        _require_grid(grid, r0)
        return Background(grid, kind, r0, ones, ones, r0, provenance=provenance)

    if phi is None:
        raise ConformalError("conformally flat background needs a conformal factor phi")
    _require_grid(grid, phi)
    if phi.min <= 0.0:
        raise ConformalError(f"conformal factor phi must be positive, min {phi.min:g}")
    lap = laplacian_values(grid, phi.values, method)
    r0_values = -(phi.values ** -critical_exponent(n)) * conformal_constant(n) * lap
    weights = phi.with_values(phi.values ** volume_exponent(n))
    return Background(
        grid,
        kind,
        phi.with_values(r0_values),
        weights,
        phi,
        zeros,
        phi=phi,
        provenance=provenance,
    )


def _require_grid(grid: GridSpec, f: ScalarField) -> None:
    if f.grid != grid:
        raise ConformalError("field lives on a different grid than the background")


def make_metric(bg: Background, u: ScalarField) -> ConformalMetric:
    """
    Wrap a conformal factor as a metric in the class of ``bg``.

    Raises:
        ConformalError: If u is not above the positivity floor or lives on another grid.
    """
    try:
        return ConformalMetric(bg, u)
    except ValueError as e:
        raise ConformalError(str(e)) from e


def laplacian_background(bg: Background, f: ScalarField, method: MethodLike = "spectral") -> ScalarField:
    """
    Laplace-Beltrami operator Δ_{g₀} of the background.

    With g₀ = w^{q} g_flat: Δ_{g₀} f = w^{-q} (Δ f + 2 ⟨∇w, ∇f⟩ / w).
    """
    grid = check_same_grid(bg.r0, f)
    return f.with_values(_conformal_laplacian_values(grid, bg.conformal_to_flat.values, f.values, method))


def _conformal_laplacian_values(
    grid: GridSpec, v: np.ndarray, f: np.ndarray, method: MethodLike
) -> np.ndarray:
    """Laplace-Beltrami of the flat-chart metric v^{q} g_flat applied to f."""
    q = curvature_exponent(grid.dimension)
    lap_f = laplacian_values(grid, f, method)
    grad_v = gradient_values(grid, v, method)
    grad_f = gradient_values(grid, f, method)
    cross = sum(a * b for a, b in zip(grad_v, grad_f))
    return v ** -q * (lap_f + 2.0 * cross / v)


def scalar_curvature_values(bg: Background, u: np.ndarray, method: MethodLike = "spectral") -> np.ndarray:
    """
    Scalar curvature of u^{q} g₀ for a raw node array.

    R = -v^{-p} (c_n Δ_flat v - P v) with v = u·w and P the background potential.
    """
    grid = bg.grid
    n = grid.dimension
    v = u * bg.conformal_to_flat.values
    lap_v = laplacian_values(grid, v, method)
    return -(v ** -critical_exponent(n)) * (conformal_constant(n) * lap_v - bg.potential.values * v)


def scalar_curvature(m: ConformalMetric, method: MethodLike = "spectral") -> ScalarField:
    """
    Scalar curvature R(g) of g = u^{4/(n-2)} g₀.

    Evaluates R(g) = -u^{-(n+2)/(n-2)} (c_n Δ_{g₀} u - R₀ u) by composing
    u with the background factor in the flat chart.
    """
    return m.u.with_values(scalar_curvature_values(m.background, m.u.values, method))


def laplace_beltrami_of_metric(
    m: ConformalMetric, f: ScalarField, method: MethodLike = "spectral"
) -> ScalarField:
    """Δ_g f = u^{-4/(n-2)} (Δ_{g₀} f + 2 ⟨∇u, ∇f⟩_{g₀} / u)."""
    grid = check_same_grid(m.u, f)
    v = m.u.values * m.background.conformal_to_flat.values
    return f.with_values(_conformal_laplacian_values(grid, v, f.values, method))


def _volume_density(m: ConformalMetric) -> np.ndarray:
    return m.u.values ** volume_exponent(m.background.dimension) * m.background.vol_weights.values


def volume(m: ConformalMetric) -> float:
    """Vol(g) = ∫ u^{2n/(n-2)} dvol_{g₀}."""
    return integrate_values(m.background.grid, _volume_density(m))


def total_scalar(m: ConformalMetric, method: MethodLike = "spectral") -> float:
    """∫ R(g) dvol_g."""
    R = scalar_curvature_values(m.background, m.u.values, method)
    return integrate_values(m.background.grid, R * _volume_density(m))


def dirichlet_total(m: ConformalMetric, method: MethodLike = "spectral") -> float:
    """
    Dirichlet form ∫ (c_n |∇u|²_{g₀} + R₀ u²) dvol_{g₀}.

    Agrees with ``total_scalar`` by integration by parts.
    """
    bg = m.background
    grid = bg.grid
    n = grid.dimension
    w = bg.conformal_to_flat.values
    grad_sq = sum(c * c for c in gradient_values(grid, m.u.values, method))
    # |∇u|²_{g₀} dvol_{g₀} = w^{2} |∇u|² dx in the flat chart
    density = conformal_constant(n) * w * w * grad_sq + bg.r0.values * m.u.values**2 * bg.vol_weights.values
    return integrate_values(grid, density)


def mean_scalar(m: ConformalMetric, method: MethodLike = "spectral") -> float:
    """r(g) = ∫ R dvol_g / Vol(g)."""
    return total_scalar(m, method) / volume(m)


def yamabe_quotient(m: ConformalMetric, method: MethodLike = "spectral") -> float:
    """Yamabe energy ∫ R dvol_g / Vol(g)^{(n-2)/n}."""
    n = m.background.dimension
    return total_scalar(m, method) / volume(m) ** ((n - 2.0) / n)


def estimate_yamabe_constant(bg: Background, cfg: YamabeEstimateConfig) -> YamabeEstimate:
    """
    Numerical upper bound on Y(M, [g₀]) from normalized-flow runs.

    Each start is a random smooth positive factor drawn from
    ``default_rng([seed, index])``; it is run through the normalized flow up
    to ``cfg.horizon`` and its final Yamabe quotient is recorded. Starts run
    in parallel and are reassembled by index, so the result does not depend
    on the thread count.

    Raises:
        ConformalError: If every start aborted.
    """
    from core.flow import FlowAbortError, run_flow, stability_dt
    from models.flow import FlowConfig, FlowMode

    grid = bg.grid
    n = grid.dimension
    logger = _get_logger()

    def run_start(index: int) -> float:
        rng = np.random.default_rng([cfg.seed, index])
        try:
            u0 = random_smooth_field(grid, rng, max_mode=cfg.max_mode, amplitude=cfg.amplitude)
        except GridError as e:
            raise ConformalError(str(e)) from e
        dt = cfg.dt
        if dt is None:
            dt = min(0.5 * stability_dt(make_metric(bg, u0)), cfg.horizon / 10.0)
        flow_cfg = FlowConfig(mode=FlowMode.NORMALIZED, dt=dt, horizon=cfg.horizon)
        series = run_flow(u0, bg, flow_cfg, label=f"start {index}")
        last = series.samples[-1]
        return last.total_scalar / last.volume ** ((n - 2.0) / n)

    quotients: list[Optional[float]] = [None] * cfg.starts
    failures: dict[int, str] = {}
    with RunExecutor(max_workers=cfg.threads, name="yamabe") as executor:
        futures = [executor.submit(run_start, index) for index in range(cfg.starts)]
        for index, future in enumerate(futures):
            try:
                quotients[index] = future.result()
            except FlowAbortError as e:
                failures[index] = str(e)
                logger.warning(f"Start {index} aborted: {e}")

    finished = [(q, i) for i, q in enumerate(quotients) if q is not None]
    if not finished:
        raise ConformalError(f"all {cfg.starts} Yamabe starts aborted")
    value, best = min(finished)
    logger.info(f"Yamabe estimate {value:.6g} from start {best} ({len(finished)}/{cfg.starts} finished)")
    return YamabeEstimate(
        value=float(value),
        best_start=best,
        quotients=tuple(quotients),
        failures=failures,
        seed=cfg.seed,
    )
