"""
Checkers for the comparison inequalities of the Yamabe flow.

Each checker consumes a TimeSeries (or fields) and returns an EstimateReport.
Inputs outside the hypotheses an inequality is stated under raise
HypothesisError; data that merely fails a hypothesis gate (e.g. an initial
total curvature above κ) is reported with ``precondition_met=False``.
"""

import logging
from typing import Any, Literal, Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid

from core.conformal import critical_exponent, curvature_exponent, laplacian_background
from core.constants import (
    DEFAULT_TOL_ABS,
    DEFAULT_TOL_REL,
    MONOTONE_SLACK,
    PSI_LAPLACIAN_TOL,
    PSI_ZERO_REL,
)
from core.grid import GridError, field_metrics, integrate_values
from core.logger import setup_logger
from models.conformal import Background
from models.flow import FlowMode, TimeSeries
from models.grid import ScalarField
from models.reports import CheckStatus, EstimateReport

__all__ = [
    "EstimateError",
    "HypothesisError",
    "gronwall_bound",
    "gronwall_closed_form_check",
    "ye_min_bound_check",
    "ye_max_bound_check",
    "scalar_lower_preservation_check",
    "brendle_sup_bound_check",
    "volume_bounds_check",
    "psi_constant",
    "l1_estimate_check",
    "holder_quotient",
    "uniform_convergence_probe",
    "format_report_table",
]

_logger: Optional[logging.Logger] = None

L1Variable = Literal["factor", "fast_diffusion"]


def _get_logger() -> logging.Logger:
    """Get or create the module logger."""
    global _logger
    if _logger is None:
        _logger = setup_logger("Estimates")
    return _logger


class EstimateError(Exception):
    """
    Exception raised for malformed checker inputs.

    Covers negative Gronwall coefficients, bad time grids, wrong flow modes
    and series that cannot be compared.
    """

    pass


class HypothesisError(EstimateError):
    """
    Exception raised when inputs lie outside an inequality's hypotheses.

    Covers positive background curvature in the nonpositive case, positive
    Yamabe bounds, σ < 1, inadmissible cutoffs ψ and C⁰ bound violations.
    """

    pass


def gronwall_bound(
    alpha: np.ndarray,
    beta: np.ndarray,
    t: np.ndarray,
    rule: Literal["trapezoid", "simpson"] = "trapezoid",
) -> np.ndarray:
    """
    Gronwall bound α(t) + ∫₀ᵗ α(s)β(s) exp(∫ₛᵗ β) ds on a sample grid.

    The double integral is evaluated as e^{B(t)} ∫₀ᵗ αβe^{-B} with
    B = ∫₀ β, both by cumulative quadrature.

    Args:
        alpha: α at the sample times
        beta: Nonnegative β at the sample times
        t: Strictly increasing sample times starting at 0
        rule: Cumulative quadrature, "trapezoid" or "simpson"

    Returns:
        np.ndarray: The bound at every sample time

    Raises:
        EstimateError: On negative β, mismatched lengths or a bad time grid.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    t = np.asarray(t, dtype=float)
    if not (alpha.shape == beta.shape == t.shape) or t.ndim != 1 or t.size < 2:
        raise EstimateError("alpha, beta and t must be 1-D arrays of equal length ≥ 2")
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise EstimateError("time grid must start at 0 and increase strictly")
    if np.any(beta < 0):
        raise EstimateError(f"beta must be nonnegative, min {beta.min():g}")

    if rule == "simpson":
        def cumulative(y: np.ndarray) -> np.ndarray:
            return cumulative_simpson(y, x=t, initial=0.0)
    elif rule == "trapezoid":
        def cumulative(y: np.ndarray) -> np.ndarray:
            return cumulative_trapezoid(y, x=t, initial=0.0)
    else:
        raise EstimateError(f"unknown quadrature rule: {rule}")

    B = cumulative(beta)
    inner = cumulative(alpha * beta * np.exp(-B))
    return alpha + np.exp(B) * inner


def gronwall_closed_form_check(
    t: np.ndarray,
    a: float,
    b: float,
    rule: Literal["trapezoid", "simpson"] = "trapezoid",
    tol_abs: float = DEFAULT_TOL_ABS,
    tol_rel: float = DEFAULT_TOL_REL,
) -> EstimateReport:
    """
    Accuracy of gronwall_bound on a given time grid.

    With α ≡ a and β ≡ b the bound is a·e^{bt} in closed form; the margin at
    each sample is minus the quadrature error, so the check holds when the
    quadrature reproduces the closed form within tolerance.
    """
    name = "gronwall"
    t = np.asarray(t, dtype=float)
    exact = a * np.exp(b * t)
    if t.size < 2:
        return _report(name, t, np.zeros(t.size), exact, tol_abs, tol_rel, {"a": a, "b": b, "rule": rule})
    bound = gronwall_bound(np.full_like(t, a), np.full_like(t, b), t, rule=rule)
    error = np.abs(bound - exact)
    return _report(
        name, t, -error, exact, tol_abs, tol_rel,
        {"a": a, "b": b, "rule": rule, "max_error": float(error.max())},
    )


def _tolerance(bound: np.ndarray, tol_abs: float, tol_rel: float) -> float:
    finite = np.abs(bound[np.isfinite(bound)])
    return tol_abs + tol_rel * (float(finite.max()) if finite.size else 0.0)


def _report(
    name: str,
    times: np.ndarray,
    margins: np.ndarray,
    bound: np.ndarray,
    tol_abs: float,
    tol_rel: float,
    parameters: dict[str, Any],
    precondition_met: bool = True,
    message: str = "",
) -> EstimateReport:
    """Assemble a report from per-sample margins."""
    tolerance = _tolerance(np.asarray(bound, dtype=float), tol_abs, tol_rel)
    margins = np.asarray(margins, dtype=float)
    worst = int(np.argmin(np.where(np.isnan(margins), -np.inf, margins)))
    worst_margin = float(margins[worst])
    holds = bool(worst_margin >= -tolerance)
    if not precondition_met:
        status = CheckStatus.PRECONDITION_FAILED
    else:
        status = CheckStatus.HOLDS if holds else CheckStatus.VIOLATED
    report = EstimateReport(
        name=name,
        holds=holds,
        precondition_met=precondition_met,
        status=status,
        worst_margin=worst_margin,
        worst_time=float(times[worst]),
        tolerance=tolerance,
        tolerance_abs=tol_abs,
        tolerance_rel=tol_rel,
        parameters=parameters,
        times=[float(x) for x in times],
        margins=[float(x) for x in margins],
        message=message,
    )
    level = logging.INFO if status is CheckStatus.HOLDS else logging.WARNING
    _get_logger().log(level, f"{name}: {status.value}, worst margin {worst_margin:.3e} at {report.worst_time:.6g}")
    return report


def _require_mode(series: TimeSeries, mode: FlowMode, name: str) -> None:
    if series.mode is not mode:
        raise EstimateError(f"{name} needs a series of the {mode.value} flow, got {series.mode.value}")
    if not series.samples:
        raise EstimateError(f"{name} needs at least one sample")


def _require_nonpositive_background(series: TimeSeries, name: str) -> None:
    if series.r0_max > 0:
        raise HypothesisError(
            f"{name} is stated for R0 ≤ 0; background has max R0 = {series.r0_max:g}"
        )


def ye_min_bound_check(
    series: TimeSeries,
    y_lower: float,
    vol: float,
    tol_abs: float = DEFAULT_TOL_ABS,
    tol_rel: float = DEFAULT_TOL_REL,
) -> EstimateReport:
    """
    Exponential lower bound on the minimum of the conformal factor.

    Checks u_min(t)^p ≥ exp(((n-2)/(8(n-1))) Y Vol^{-2/n} t) u_min(0)^p with
    p = (n+2)/(n-2) along a normalized run over a nonpositive background.

    Raises:
        HypothesisError: If R₀ has a positive value or Y_lower > 0.
    """
    name = "ye-min"
    _require_mode(series, FlowMode.NORMALIZED, name)
    _require_nonpositive_background(series, name)
    if y_lower > 0:
        raise HypothesisError(f"{name} needs a nonpositive Yamabe lower bound, got {y_lower:g}")
    n = series.dimension
    p = critical_exponent(n)
    t = series.times()
    lhs = series.column("u_min") ** p
    rate = (n - 2.0) / (8.0 * (n - 1.0)) * y_lower * vol ** (-2.0 / n)
    bound = np.exp(rate * t) * lhs[0]
    return _report(
        name, t, lhs - bound, bound, tol_abs, tol_rel,
        {"Y_lower": y_lower, "Vol": vol, "rate": rate, "n": n},
    )


def ye_max_bound_check(
    series: TimeSeries,
    kappa: float,
    vol: float,
    r0_min: float,
    tol_abs: float = DEFAULT_TOL_ABS,
    tol_rel: float = DEFAULT_TOL_REL,
    rule: Literal["trapezoid", "simpson"] = "trapezoid",
) -> EstimateReport:
    """
    Gronwall upper bound on the maximum of the conformal factor.

    Checks u_max(t)^{4/(n-2)} ≤ α(t) + ∫₀ᵗ α(s)β̃ e^{β̃(t-s)} ds with
    α(t) = u_max(0)^{4/(n-2)} - ((n-2)/((n-1)(n+2))) min R₀ · t and
    β̃ = (2(n-2)/((n-1)(n+2))) Vol · max{κ, 0}.

    Raises:
        HypothesisError: If R₀ has a positive value.
    """
    name = "ye-max"
    _require_mode(series, FlowMode.NORMALIZED, name)
    _require_nonpositive_background(series, name)
    n = series.dimension
    q = curvature_exponent(n)
    t = series.times()
    lhs = series.column("u_max") ** q
    if t.size < 2:
        return _report(name, t, np.zeros(1), lhs, tol_abs, tol_rel, {"kappa": kappa})
    factor = (n - 2.0) / ((n - 1.0) * (n + 2.0))
    alpha = lhs[0] - factor * r0_min * t
    beta = np.full_like(t, 2.0 * factor * vol * max(kappa, 0.0))
    bound = gronwall_bound(alpha, beta, t, rule=rule)
    return _report(
        name, t, bound - lhs, bound, tol_abs, tol_rel,
        {"kappa": kappa, "Vol": vol, "R0_min": r0_min, "beta": float(beta[0]), "rule": rule, "n": n},
    )


def scalar_lower_preservation_check(
    series: TimeSeries,
    delta: Union[ScalarField, float],
    tol_abs: float = DEFAULT_TOL_ABS,
    tol_rel: float = DEFAULT_TOL_REL,
) -> EstimateReport:
    """
    Preservation of the lower curvature bound inf R(g(t)) ≥ min{δ, 0}.

    A start with inf R(0) < inf δ is reported as a precondition failure.
    """
    name = "scalar-lower"
    _require_mode(series, FlowMode.NORMALIZED, name)
    delta_inf = delta.min if isinstance(delta, ScalarField) else float(delta)
    target = min(delta_inf, 0.0)
    t = series.times()
    inf_scalar = series.column("inf_scalar")
    bound = np.full_like(t, target)
    precondition_met = bool(inf_scalar[0] >= delta_inf - _tolerance(bound, tol_abs, tol_rel))
    message = "" if precondition_met else f"inf R(0) = {inf_scalar[0]:.6g} is below inf δ = {delta_inf:.6g}"
    return _report(
        name, t, inf_scalar - target, bound, tol_abs, tol_rel,
        {"delta_inf": delta_inf, "target": target},
        precondition_met=precondition_met,
        message=message,
    )


def brendle_sup_bound_check(
    series: TimeSeries,
    kappa: float,
    vol: float,
    sigma: float,
    tol_abs: float = DEFAULT_TOL_ABS,
    tol_rel: float = DEFAULT_TOL_REL,
) -> EstimateReport:
    """
    Linear-in-time sup bound of the positive case.

    Checks sup u(t) ≤ sup u(0) + ((n-2)/4)(½ Vol⁻¹ κ + σ) t. The data gates
    are ∫R(g(0)) dvol ≤ κ and inf R(0) + σ ≥ 1.

    Raises:
        HypothesisError: If σ < 1.
    """
    name = "brendle-sup"
    _require_mode(series, FlowMode.NORMALIZED, name)
    if sigma < 1:
        raise HypothesisError(f"sigma = max(1 - δ, 1) is at least 1, got {sigma:g}")
    n = series.dimension
    t = series.times()
    u_max = series.column("u_max")
    slope = (n - 2.0) / 4.0 * (0.5 * kappa / vol + sigma)
    bound = u_max[0] + slope * t
    tolerance = _tolerance(bound, tol_abs, tol_rel)
    first = series.samples[0]
    gates = []
    if first.total_scalar > kappa + tolerance:
        gates.append(f"∫R(0) dvol = {first.total_scalar:.6g} exceeds κ = {kappa:.6g}")
    if first.inf_scalar + sigma < 1 - tolerance:
        gates.append(f"inf R(0) + σ = {first.inf_scalar + sigma:.6g} is below 1")
    return _report(
        name, t, bound - u_max, bound, tol_abs, tol_rel,
        {"kappa": kappa, "Vol": vol, "sigma": sigma, "slope": slope},
        precondition_met=not gates,
        message="; ".join(gates),
    )


def volume_bounds_check(
    series: TimeSeries,
    kappa: float,
    y: float,
    tol_abs: float = DEFAULT_TOL_ABS,
    tol_rel: float = DEFAULT_TOL_REL,
) -> EstimateReport:
    """
    Two-sided volume bounds along the unnormalized flow.

    The verdict is the integrated upper bound Vol(t) ≤ (Vol(0)^{2/n} - Y t)^{n/2},
    which follows from ∫R dvol ≥ Y Vol^{(n-2)/n}. The exponential lower bound
    Vol(t) ≥ Vol(0) exp(-nκt/(2Vol(0))) needs r(g(t)) to be nonincreasing,
    which the unnormalized flow does not guarantee, so it is reported in the
    parameters (``lower_holds``) without entering the verdict. The time-free
    displayed constants (-nY + Vol(0)^{2/n})^{n/2} and
    Vol(0) exp(-nκ/(2Vol(0))) are compared at samples with t ≤ 1 and
    recorded the same way.

    Raises:
        HypothesisError: If Y > 0.
    """
    name = "volume-bounds"
    _require_mode(series, FlowMode.UNNORMALIZED, name)
    if y > 0:
        raise HypothesisError(f"{name} is stated for Y ≤ 0, got {y:g}")
    n = series.dimension
    t = series.times()
    vol = series.column("volume")
    v0 = vol[0]
    upper = (v0 ** (2.0 / n) - y * t) ** (n / 2.0)
    lower = v0 * np.exp(-n * kappa * t / (2.0 * v0))
    upper_margins = upper - vol
    lower_margins = vol - lower
    tolerance = _tolerance(upper, tol_abs, tol_rel)
    lower_holds = bool(lower_margins.min() >= -tolerance)

    early = t <= 1.0
    display_upper = (-n * y + v0 ** (2.0 / n)) ** (n / 2.0)
    display_lower = v0 * np.exp(-n * kappa / (2.0 * v0))
    first = series.samples[0]
    notes = []
    precondition_met = bool(first.total_scalar <= kappa + tolerance)
    if not precondition_met:
        notes.append(f"∫R(0) dvol = {first.total_scalar:.6g} exceeds κ = {kappa:.6g}")
    if not lower_holds:
        notes.append(f"exponential lower bound missed by {-lower_margins.min():.3e}")
    return _report(
        name, t, upper_margins, upper, tol_abs, tol_rel,
        {
            "kappa": kappa,
            "Y": y,
            "Vol0": float(v0),
            "upper_worst_margin": float(upper_margins.min()),
            "lower_worst_margin": float(lower_margins.min()),
            "lower_holds": lower_holds,
            "display_upper": float(display_upper),
            "display_lower": float(display_lower),
            "display_upper_worst_margin": float((display_upper - vol[early]).min()),
            "display_lower_worst_margin": float((vol[early] - display_lower).min()),
        },
        precondition_met=precondition_met,
        message="; ".join(notes),
    )


def _admissible_psi(psi: ScalarField, bg: Background) -> tuple[np.ndarray, np.ndarray]:
    """Return (ψ, Δ_{g₀}ψ) after checking ψ is a usable cutoff."""
    if psi.grid != bg.grid:
        raise EstimateError("psi lives on a different grid than the background")
    if psi.min < 0:
        raise HypothesisError(f"psi must be nonnegative, min {psi.min:g}")
    if psi.max <= 0:
        raise HypothesisError("psi vanishes identically")
    lap = laplacian_background(bg, psi).values
    zeros = psi.values <= PSI_ZERO_REL * psi.max
    if np.any(np.abs(lap[zeros]) > PSI_LAPLACIAN_TOL):
        worst = float(np.max(np.abs(lap[zeros])))
        raise HypothesisError(f"psi is not an admissible cutoff: |Δψ| = {worst:.3e} where ψ = 0")
    return psi.values, lap


def psi_constant(psi: ScalarField, bg: Background) -> float:
    """
    C[ψ] = ∫ |Δ_{g₀}ψ|^{(n+2)/4} ψ^{-(n-2)/4} dvol₀.

    Nodes where ψ vanishes contribute 0; they must also have Δψ ≈ 0.

    Raises:
        HypothesisError: If ψ is negative somewhere or not admissible.
    """
    n = bg.dimension
    values, lap = _admissible_psi(psi, bg)
    positive = values > PSI_ZERO_REL * psi.max
    integrand = np.zeros_like(values)
    integrand[positive] = np.abs(lap[positive]) ** ((n + 2.0) / 4.0) * values[positive] ** (-(n - 2.0) / 4.0)
    return integrate_values(bg.grid, integrand * bg.vol_weights.values)


def l1_estimate_check(
    series_a: TimeSeries,
    series_b: TimeSeries,
    psi: ScalarField,
    bg: Background,
    variable: L1Variable = "factor",
    tol_abs: float = DEFAULT_TOL_ABS,
    tol_rel: float = DEFAULT_TOL_REL,
) -> EstimateReport:
    """
    Weighted L¹ contraction estimate between two unnormalized runs.

    With L(t) = ∫ψ|X_a - X_b| dvol₀ (X = u, or w = u^{(n+2)/(n-2)} for the
    fast-diffusion variable), checks
    L(t)^{4/(n+2)} ≤ L(0)^{4/(n+2)}
        + (((n-1)(n+2)/(n-2))(2C[ψ])^{4/(n+2)} + ((n+2)/4)(∫ψ dvol₀)^{4/(n+2)}) t
    at every common snapshot.

    Raises:
        EstimateError: If the series are not unnormalized or their snapshots differ.
        HypothesisError: If ψ is not an admissible cutoff.
    """
    name = "l1"
    for series in (series_a, series_b):
        _require_mode(series, FlowMode.UNNORMALIZED, name)
    if series_a.dimension != series_b.dimension:
        raise EstimateError("series have different dimensions")
    times_a = [s.t for s in series_a.snapshots]
    times_b = [s.t for s in series_b.snapshots]
    if len(times_a) < 1 or len(times_a) != len(times_b) or not np.allclose(times_a, times_b, rtol=1e-9, atol=0):
        raise EstimateError("series must carry snapshots at the same times")
    if variable not in ("factor", "fast_diffusion"):
        raise EstimateError(f"unknown L1 variable: {variable}")

    n = bg.dimension
    exponent = 4.0 / (n + 2.0)
    power = critical_exponent(n) if variable == "fast_diffusion" else 1.0
    c_psi = psi_constant(psi, bg)
    weights = psi.values * bg.vol_weights.values

    distances = np.array([
        integrate_values(bg.grid, weights * np.abs(a.u.values**power - b.u.values**power))
        for a, b in zip(series_a.snapshots, series_b.snapshots)
    ])
    psi_mass = integrate_values(bg.grid, weights)
    slope = (
        (n - 1.0) * (n + 2.0) / (n - 2.0) * (2.0 * c_psi) ** exponent
        + (n + 2.0) / 4.0 * psi_mass**exponent
    )
    t = np.array(times_a)
    lhs = distances**exponent
    bound = lhs[0] + slope * t
    return _report(
        name, t, bound - lhs, bound, tol_abs, tol_rel,
        {"C_psi": c_psi, "psi_mass": psi_mass, "slope": slope, "variable": variable},
    )


def holder_quotient(f: ScalarField, alpha: float) -> float:
    """
    Empirical Hölder seminorm max |f(x) - f(y)| / |x - y|^α.

    Pairs are taken along each axis at every periodic shift up to half the
    axis, which captures the seminorm of smooth data.
    """
    if not 0 < alpha <= 1:
        raise EstimateError(f"Hölder exponent must lie in (0, 1], got {alpha}")
    best = 0.0
    for axis, (count, h) in enumerate(zip(f.grid.shape, f.grid.spacing)):
        for shift in range(1, count // 2 + 1):
            difference = np.abs(f.values - np.roll(f.values, shift, axis=axis))
            best = max(best, float(difference.max()) / (shift * h) ** alpha)
    return best


def uniform_convergence_probe(
    pairs: Sequence[tuple[ScalarField, ScalarField]],
    c0: float,
    monotone_from: int = 4,
    alpha: float = 0.5,
    weights: Optional[ScalarField] = None,
    tol_abs: float = DEFAULT_TOL_ABS,
    tol_rel: float = DEFAULT_TOL_REL,
) -> EstimateReport:
    """
    Empirical uniform convergence of uᵢ → u from L¹ convergence and a C⁰ bound.

    Reports the sup and L¹ distance sequences (index i = 1, 2, ...) and
    checks the sup distances decrease from ``monotone_from`` on. The
    log-log slope of sup against L¹ distance and the Hölder quotients of
    uᵢ - u are recorded without a verdict.

    Raises:
        HypothesisError: If some uᵢ leaves [C₀⁻¹, C₀].
    """
    name = "uniform-convergence"
    logger = _get_logger()
    if not pairs:
        raise EstimateError("uniform convergence probe needs at least one pair")
    if c0 < 1:
        raise HypothesisError(f"C0 must be at least 1, got {c0:g}")
    for index, (u_i, _) in enumerate(pairs, start=1):
        if u_i.min < 1.0 / c0 or u_i.max > c0:
            raise HypothesisError(
                f"u_{index} leaves [1/C0, C0] = [{1.0 / c0:.6g}, {c0:.6g}]: range [{u_i.min:.6g}, {u_i.max:.6g}]"
            )

    sup, l1, holder = [], [], []
    for u_i, u in pairs:
        try:
            metrics = field_metrics(u_i, u, weights=weights)
        except GridError as e:
            raise EstimateError(str(e)) from e
        sup.append(metrics.sup_distance)
        l1.append(metrics.l1_distance)
        holder.append(holder_quotient(u_i.with_values(u_i.values - u.values), alpha))
    sup_arr = np.array(sup)
    l1_arr = np.array(l1)
    indices = np.arange(1, len(pairs) + 1, dtype=float)
    for i, (s, d, hq) in enumerate(zip(sup, l1, holder), start=1):
        logger.debug(f"u_{i}: sup {s:.3e}, L1 {d:.3e}, Hölder({alpha}) {hq:.3e}")

    slack = MONOTONE_SLACK * max(1.0, float(sup_arr.max()))
    margins = np.zeros(len(pairs))
    start = max(monotone_from, 2)
    for i in range(start, len(pairs) + 1):
        margins[i - 1] = sup_arr[i - 2] - sup_arr[i - 1] + slack
    l1_decreasing = bool(np.all(np.diff(l1_arr[start - 2:]) <= slack)) if len(pairs) >= start else True

    usable = (sup_arr > 0) & (l1_arr > 0)
    exponent = float(np.polyfit(np.log(l1_arr[usable]), np.log(sup_arr[usable]), 1)[0]) if usable.sum() >= 2 else None
    return _report(
        name, indices, margins, sup_arr, tol_abs, tol_rel,
        {
            "C0": c0,
            "monotone_from": monotone_from,
            "sup_distances": sup,
            "l1_distances": l1,
            "sup_vs_l1_exponent": exponent,
            "holder_alpha": alpha,
            "holder_quotients": holder,
        },
        precondition_met=l1_decreasing,
        message="" if l1_decreasing else "L1 distances are not decreasing",
    )


def format_report_table(reports: Sequence[EstimateReport]) -> str:
    """Render reports as a fixed-width text table."""
    header = f"{'check':<22} {'status':<20} {'worst margin':>14} {'at':>12} {'tolerance':>11}"
    lines = [header, "-" * len(header)]
    for report in reports:
        lines.append(
            f"{report.name:<22} {report.status.value:<20} {report.worst_margin:>14.6e} "
            f"{report.worst_time:>12.6g} {report.tolerance:>11.3e}"
        )
        if report.message:
            lines.append(f"{'':<22} {report.message}")
    return "\n".join(lines)
