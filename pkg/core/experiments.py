"""
Closedness experiments.

Builds a sequence of conformal factors uᵢ → u on one background, runs the
flow for the limit and every member, and checks that the total scalar bound
κ passes to the limit while the member flows converge at a positive time.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from core.config import build_background
from core.conformal import make_metric, scalar_curvature, total_scalar, volume
from core.constants import (
    BUMP_PEAK_FRACTION,
    DISTANCES_CSV_FILE,
    EXPERIMENT_REPORT_FILE,
    INITIAL_CONTINUITY_TOL,
    MONOTONE_SLACK,
    POSITIVITY_FLOOR,
    RESIDUAL_FLOOR,
    VOLUME_COMPARABILITY_FACTOR,
)
from core.estimates import uniform_convergence_probe
from core.executor import RunExecutor
from core.expressions import evaluate_expression
from core.flow import FlowAbortError, drifts, run_flow
from core.grid import bump_field, constant_field, coordinates, field_metrics, random_smooth_field
from core.logger import clip, setup_logger
from core.plots import write_line_chart
from core.storage import StorageError, content_hash, write_frame_csv, write_json, write_series_csv
from core.utils import run_file_stem
from models.conformal import Background, BackgroundKind
from models.experiment import (
    OPERATOR_LEVEL_LABEL,
    ClosednessReport,
    ExperimentSpec,
    RunSummary,
    SequenceFamily,
)
from models.flow import FlowMode, TimeSeries
from models.grid import ScalarField

__all__ = [
    "ExperimentError",
    "ExperimentAbortError",
    "is_positive_background",
    "generate_sequence",
    "run_closedness_experiment",
    "distances_frame",
    "emit_report",
]

_logger: Optional[logging.Logger] = None

DISTANCES_CHART_FILE = "distances.svg"


def _get_logger() -> logging.Logger:
    """Get or create the module logger."""
    global _logger
    if _logger is None:
        _logger = setup_logger("Experiment")
    return _logger


class ExperimentError(Exception):
    """
    Exception raised when an experiment's hypotheses cannot be met.

    Covers generator postcondition violations (positivity, the C₀ bound,
    family distances), κ below a member's total scalar curvature and a
    positive background without δ.
    """

    pass


class ExperimentAbortError(Exception):
    """
    Exception raised when one run of an experiment aborted.

    Attributes:
        index: 0 for the limit run, i for member i
        label: Run label
        cause: The flow abort
    """

    def __init__(self, index: int, label: str, cause: FlowAbortError):
        self.index = index
        self.label = label
        self.cause = cause
        super().__init__(f"{label} (index {index}) aborted: {cause}")


def is_positive_background(bg: Background) -> bool:
    """Synthetic background with positive prescribed curvature somewhere."""
    return bg.kind is BackgroundKind.SYNTHETIC and bg.r0.max > 0


def _limit_field(spec: ExperimentSpec, bg: Background) -> ScalarField:
    u = evaluate_expression(spec.limit, bg.grid)
    if u.min <= POSITIVITY_FLOOR:
        raise ExperimentError(f"limit factor {clip(spec.limit)} is not positive: min {u.min:.6g}")
    return u


def _build_members(
    spec: ExperimentSpec, u: ScalarField, weights: Optional[ScalarField] = None
) -> list[ScalarField]:
    grid = u.grid
    schedule = spec.schedule()
    members: list[ScalarField] = []

    if spec.family is SequenceFamily.C0_CONVERGENT:
        if schedule:
            eta = random_smooth_field(grid, np.random.default_rng(spec.seed), amplitude=1.0, base=0.0)
            for i, a in enumerate(schedule, start=1):
                members.append(u.with_values(u.values + (-1) ** i * a * eta.values))

    elif spec.family is SequenceFamily.LP_ONLY:
        for radius in schedule:
            bump = bump_field(grid, radius=radius, height=spec.bump_height)
            members.append(u.with_values(u.values + bump.values))

    else:
        c0 = spec.c0
        if u.min < 1.0 / c0 or u.max > c0:
            raise ExperimentError(
                f"limit factor leaves [1/C0, C0] = [{1.0 / c0:.6g}, {c0:.6g}]: range [{u.min:.6g}, {u.max:.6g}]"
            )
        x1 = coordinates(grid)[0]
        nodes = grid.nodes_per_axis[0]
        for i, amplitude in enumerate(schedule, start=1):
            if 2 * i >= nodes:
                raise ExperimentError(f"oscillation mode {i} is not resolved by {nodes} nodes on x1")
            wave = np.sin(2.0 * np.pi * i * x1 / grid.periods[0])
            members.append(u.with_values(np.clip(u.values * (1.0 + amplitude * wave), 1.0 / c0, c0)))

    _validate_members(spec, u, members, schedule, weights)
    return members


def _validate_members(
    spec: ExperimentSpec,
    u: ScalarField,
    members: list[ScalarField],
    schedule: list[float],
    weights: Optional[ScalarField] = None,
) -> None:
    """Re-check the generator postconditions on the finished fields."""
    previous_l1 = None
    for i, (u_i, s) in enumerate(zip(members, schedule), start=1):
        if not np.all(np.isfinite(u_i.values)) or u_i.min <= POSITIVITY_FLOOR:
            raise ExperimentError(f"member {i} is not positive: min {u_i.min:.6g}")
        sup = float(np.max(np.abs(u_i.values - u.values)))
        if spec.family is SequenceFamily.C0_CONVERGENT:
            if abs(sup - s) > 1e-9 * max(1.0, s):
                raise ExperimentError(f"member {i} has sup distance {sup:.6g}, schedule says {s:.6g}")
        elif spec.family is SequenceFamily.LP_ONLY:
            if sup < BUMP_PEAK_FRACTION * spec.bump_height:
                raise ExperimentError(
                    f"member {i} bump of radius {s:.6g} peaks at {sup:.6g}, "
                    f"below {BUMP_PEAK_FRACTION} of its height"
                )
        else:
            if u_i.min < 1.0 / spec.c0 or u_i.max > spec.c0:
                raise ExperimentError(f"member {i} leaves [1/C0, C0]")
            l1 = field_metrics(u_i, u, weights=weights).l1_distance
            if previous_l1 is not None and l1 >= previous_l1:
                raise ExperimentError(
                    f"member {i} has L1 distance {l1:.6g}, not below member {i - 1}'s {previous_l1:.6g}"
                )
            previous_l1 = l1


def generate_sequence(spec: ExperimentSpec, background: Optional[Background] = None) -> list[ScalarField]:
    """
    Members u₁..u_N of the configured family.

    - C⁰: uᵢ = u + (-1)^i·sᵢ·η with one seeded smooth η of sup norm 1
    - Lᵖ only: uᵢ = u + bump of height ``bump_height`` and radius sᵢ
    - bounded L¹: uᵢ = clip(u·(1 + sᵢ·sin(2πi·x₁/L₁)), 1/C₀, C₀), with L¹
      distances to u strictly decreasing in i

    The sequence is a deterministic function of the spec.

    Raises:
        ExperimentError: If a postcondition of the family fails.
        ConfigError: If the background spec is invalid.
        ExpressionError: If the limit expression is invalid.
    """
    bg = background if background is not None else build_background(spec.background)
    return _build_members(spec, _limit_field(spec, bg), bg.vol_weights)


def _t_star(spec: ExperimentSpec) -> float:
    k_star = max(1, round(spec.t_star_fraction * spec.flow.step_count))
    return k_star * spec.flow.dt


def _invariants(series: TimeSeries, tolerance: float) -> tuple[float, float, bool]:
    measured = drifts(series)
    watched = series.column("r" if series.mode is FlowMode.NORMALIZED else "total_scalar")
    scale = max(1.0, float(np.max(np.abs(watched))))
    holds = measured["monotone_increase"] <= tolerance * scale
    if series.mode is FlowMode.NORMALIZED:
        holds = holds and measured["volume_drift"] <= tolerance
    return measured["volume_drift"], measured["monotone_increase"], holds


def _delta_field(
    spec: ExperimentSpec, bg: Background, members: list[ScalarField], u: ScalarField
) -> Optional[ScalarField]:
    if spec.delta is None:
        return None
    if spec.delta.strip() != "auto":
        return evaluate_expression(spec.delta, bg.grid)
    method = spec.flow.method
    infs = [scalar_curvature(make_metric(bg, f), method).min for f in members or [u]]
    return constant_field(bg.grid, min(infs))


def _run_all(
    runs: list[tuple[str, ScalarField]], bg: Background, spec: ExperimentSpec, threads: int
) -> list[TimeSeries]:
    flow_cfg = spec.flow.model_copy(
        update={"snapshot_times": tuple(sorted(set(spec.flow.snapshot_times) | {_t_star(spec)}))}
    )
    results: list[TimeSeries] = []
    with RunExecutor(max_workers=threads, name="experiment") as executor:
        futures = [executor.submit(run_flow, field, bg, flow_cfg, label) for label, field in runs]
        for index, ((label, _), future) in enumerate(zip(runs, futures)):
            try:
                results.append(future.result())
            except FlowAbortError as e:
                raise ExperimentAbortError(index, label, e) from e
    return results


def run_closedness_experiment(
    spec: ExperimentSpec,
    background: Optional[Background] = None,
    threads: Optional[int] = None,
) -> ClosednessReport:
    """
    Run the limit and every member through the flow and check closedness.

    κ = "auto" takes the largest member total scalar curvature (the limit's
    own value when there are no members). t★ is the step nearest
    ``t_star_fraction``·T.

    Args:
        spec: Experiment description
        background: Prebuilt background; built from ``spec.background`` when omitted
        threads: Parallel runs, overriding ``spec.threads``

    Raises:
        ExperimentError: If a hypothesis fails before any run starts.
        ExperimentAbortError: If a run aborted; carries its index.
    """
    logger = _get_logger()
    config_hash = content_hash(spec.model_dump(mode="json", exclude={"threads"}))
    bg = background if background is not None else build_background(spec.background)
    grid = bg.grid
    method = spec.flow.method
    positive = is_positive_background(bg)

    if spec.family is SequenceFamily.L1_WITH_BOUNDS and bg.r0.max > 0:
        raise ExperimentError("the l1-bounds family needs a background with R0 <= 0")
    if positive and spec.delta is None:
        raise ExperimentError("a positive synthetic background needs delta")

    u = _limit_field(spec, bg)
    members = _build_members(spec, u, bg.vol_weights)
    count = len(members)
    schedule = spec.schedule()
    labels = [OPERATOR_LEVEL_LABEL] if positive else []

    limit_metric = make_metric(bg, u)
    limit_total = total_scalar(limit_metric, method)
    limit_volume = volume(limit_metric)
    member_metrics = [make_metric(bg, f) for f in members]
    member_totals = [total_scalar(m, method) for m in member_metrics]

    kappa_auto = spec.kappa == "auto"
    if kappa_auto:
        kappa = max(member_totals) if member_totals else limit_total
    else:
        kappa = float(spec.kappa)
        tol = spec.tolerance * max(1.0, abs(kappa))
        for i, value in enumerate(member_totals, start=1):
            if value > kappa + tol:
                raise ExperimentError(f"member {i} has total scalar {value:.6g} above kappa {kappa:.6g}")
    hypothesis_margin = kappa - max(member_totals) if member_totals else None

    delta = _delta_field(spec, bg, members, u)
    t_star = _t_star(spec)
    threads = threads or spec.threads or 1
    logger.info(
        f"Experiment {spec.name}: {spec.family.value}, N={count}, kappa={kappa:.6g}"
        f"{' (auto)' if kappa_auto else ''}, t*={t_star:g}, {threads} thread(s)"
    )

    runs = [("limit", u)] + [(f"member {i}", f) for i, f in enumerate(members, start=1)]
    results = _run_all(runs, bg, spec, threads)
    limit_series = results[0]
    limit_snapshot = limit_series.snapshot_at(t_star)

    summaries: list[RunSummary] = []
    sup_t_star: list[float] = []
    sup_initial: list[float] = []
    l1_initial: list[float] = []
    lp_initial: list[float] = []
    for index, ((label, field), series) in enumerate(zip(runs, results)):
        metric = limit_metric if index == 0 else member_metrics[index - 1]
        scalar = scalar_curvature(metric, method)
        drift, increase, invariants_hold = _invariants(series, spec.invariant_tolerance)
        if not invariants_hold:
            logger.warning(
                f"{label}: flow invariants outside tolerance (volume drift {drift:.3e}, increase {increase:.3e})"
            )
        summary = dict(
            index=index,
            label=label,
            total_scalar=limit_total if index == 0 else member_totals[index - 1],
            volume=volume(metric),
            inf_scalar=scalar.min,
            volume_drift=drift,
            monotone_increase=increase,
            invariants_hold=invariants_hold,
        )
        if delta is not None:
            summary["delta_margin"] = float(np.min(scalar.values - delta.values))
        if index > 0:
            initial = field_metrics(field, u, weights=bg.vol_weights)
            snapshot = series.snapshot_at(t_star)
            if snapshot is None or limit_snapshot is None:
                raise ExperimentError(f"no snapshot at t*={t_star:g} for {label}")
            later = field_metrics(snapshot.u, limit_snapshot.u, weights=bg.vol_weights)
            ratio = summary["volume"] / limit_volume
            comparable = 1.0 / VOLUME_COMPARABILITY_FACTOR <= ratio <= VOLUME_COMPARABILITY_FACTOR
            if not comparable:
                logger.warning(f"{label}: volume ratio {ratio:.4g} to the limit leaves [1/2, 2]")
            summary.update(
                volume_ratio=ratio,
                volume_comparable=comparable,
                sup_distance_initial=initial.sup_distance,
                l1_distance_initial=initial.l1_distance,
                lp_distance_initial=initial.lp_distance,
                sup_distance_t_star=later.sup_distance,
            )
            sup_initial.append(initial.sup_distance)
            l1_initial.append(initial.l1_distance)
            lp_initial.append(initial.lp_distance)
            sup_t_star.append(later.sup_distance)
            logger.debug(
                f"{label}: sup {initial.sup_distance:.3e} -> {later.sup_distance:.3e} at t*, "
                f"Lp {initial.lp_distance:.3e}"
            )
        summaries.append(RunSummary(**summary))

    conclusion_margin = kappa - limit_total
    tolerance = spec.tolerance * max(1.0, abs(kappa))

    slack = MONOTONE_SLACK * max(1.0, max(sup_t_star, default=0.0))
    monotone_holds = all(
        sup_t_star[i - 1] <= sup_t_star[i - 2] + slack for i in range(spec.monotone_from + 1, count + 1)
    )
    monotone_strict = all(
        sup_t_star[i - 1] < sup_t_star[i - 2] for i in range(spec.monotone_from + 1, count + 1)
    )

    totals = limit_series.column("total_scalar")
    positive_times = totals[1:] if len(totals) > 1 else totals
    limit_bound_margin = kappa - float(np.max(positive_times))

    continuity_error = None
    continuity_holds = None
    if len(totals) > 1:
        continuity_error = abs(totals[1] - limit_total) / max(abs(limit_total), RESIDUAL_FLOOR)
        continuity_holds = continuity_error <= INITIAL_CONTINUITY_TOL
        if not continuity_holds:
            logger.warning(
                f"Total scalar of the limit moves by {continuity_error:.3e} (relative) over the first sample"
            )

    delta_min = lower_bound_margin = None
    if delta is not None:
        delta_min = delta.min
        lower_bound_margin = summaries[0].inf_scalar - delta_min

    probe = None
    if spec.family is SequenceFamily.L1_WITH_BOUNDS and members:
        probe = uniform_convergence_probe(
            [(f, u) for f in members],
            c0=spec.c0,
            monotone_from=spec.monotone_from,
            weights=bg.vol_weights,
        )
        if not probe.precondition_met:
            logger.warning(f"Uniform convergence probe: {probe.message or probe.status.value}")

    failures = []
    if conclusion_margin < -tolerance:
        failures.append(f"total scalar of the limit exceeds kappa by {-conclusion_margin:.6g}")
    if limit_bound_margin < -tolerance:
        failures.append(f"limit flow exceeds kappa by {-limit_bound_margin:.6g}")
    if not monotone_holds:
        failures.append(f"sup distances at t* grow beyond index {spec.monotone_from}")
    broken = [s.label for s in summaries if not s.invariants_hold]
    if broken:
        failures.append(f"flow invariants fail for {', '.join(broken)}")
    passed = not failures

    if passed:
        logger.info(f"Experiment {spec.name} passed: margin {conclusion_margin:.6g}")
    else:
        logger.warning(f"Experiment {spec.name} failed: {'; '.join(failures)}")

    return ClosednessReport(
        name=spec.name,
        family=spec.family,
        count=count,
        labels=labels,
        kappa=kappa,
        kappa_auto=kappa_auto,
        member_total_scalar=member_totals,
        limit_total_scalar=limit_total,
        conclusion_margin=conclusion_margin,
        hypothesis_margin=hypothesis_margin,
        schedule=schedule,
        t_star=t_star,
        sup_distances_initial=sup_initial,
        l1_distances_initial=l1_initial,
        lp_distances_initial=lp_initial,
        sup_distances_t_star=sup_t_star,
        monotone_from=spec.monotone_from,
        monotone_holds=monotone_holds,
        monotone_strict=monotone_strict,
        limit_bound_margin=limit_bound_margin,
        delta_min=delta_min,
        lower_bound_margin=lower_bound_margin,
        initial_continuity_error=continuity_error,
        initial_continuity_holds=continuity_holds,
        probe=probe,
        runs=summaries,
        config_hash=config_hash,
        passed=passed,
        message="; ".join(failures),
        series={label: series for (label, _), series in zip(runs, results)},
    )


def distances_frame(report: ClosednessReport) -> pd.DataFrame:
    """Per-member distances and totals, one row per index i."""
    members = [s for s in report.runs if s.index > 0]
    return pd.DataFrame(
        {
            "i": [s.index for s in members],
            "schedule": report.schedule[: len(members)],
            "total_scalar": [s.total_scalar for s in members],
            "volume_ratio": [s.volume_ratio for s in members],
            "sup_initial": report.sup_distances_initial,
            "l1_initial": report.l1_distances_initial,
            "lp_initial": report.lp_distances_initial,
            "sup_t_star": report.sup_distances_t_star,
        },
        columns=[
            "i", "schedule", "total_scalar", "volume_ratio",
            "sup_initial", "l1_initial", "lp_initial", "sup_t_star",
        ],
    )


def emit_report(report: ClosednessReport, out_dir: Union[str, Path], charts: bool = True) -> list[Path]:
    """
    Write the report artifacts of one experiment.

    Files: ``report.json``, ``distances.csv``, one ``series_<label>.csv`` per
    run and, when there are members and ``charts`` is on, ``distances.svg``.
    Identical reports give byte-identical files.

    Raises:
        StorageError: If the directory or a file cannot be written.
        PlotError: If the chart cannot be written.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError(f"cannot create {out}: {e}") from e

    written = [
        write_json(out / EXPERIMENT_REPORT_FILE, report.model_dump(mode="json")),
        write_frame_csv(out / DISTANCES_CSV_FILE, distances_frame(report), report.config_hash),
    ]
    for label, series in report.series.items():
        written.append(
            write_series_csv(out / f"series_{run_file_stem(label)}.csv", series, report.config_hash)
        )
    if charts and report.count:
        indices = list(range(1, report.count + 1))
        written.append(
            write_line_chart(
                out / DISTANCES_CHART_FILE,
                indices,
                {
                    "sup, t=0": report.sup_distances_initial,
                    f"sup, t={report.t_star:g}": report.sup_distances_t_star,
                    "L1, t=0": report.l1_distances_initial,
                    "Lp, t=0": report.lp_distances_initial,
                },
                title=report.name,
                xlabel="i",
                ylabel="distance to the limit",
                config_hash=report.config_hash,
                log_y=True,
            )
        )
    _get_logger().info(f"Wrote {len(written)} experiment file(s) to {out}")
    return written
