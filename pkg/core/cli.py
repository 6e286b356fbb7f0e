"""
Command-line interface for yamabe-flow-lab.

Subcommands:

- ``background``: build a background and write its container and manifest
- ``flow``: run the flow from a stored background and write a run directory
- ``check``: evaluate estimate checks on stored runs
- ``experiment``: run a closedness experiment and write its report
- ``yamabe``: estimate the Yamabe constant of a stored background

Every subcommand reads an optional YAML ``--config`` first, then explicit
flags, then ``--set key=value`` overrides. Exit codes: 0 success,
1 conclusion failure, 2 hypothesis or precondition failure, 3 numerical
abort, 4 usage error.
"""

import argparse
import dataclasses
import logging
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from core.config import (
    ConfigError,
    background_expressions,
    build_background,
    load_config,
)
from core.conformal import ConformalError, curvature_exponent, estimate_yamabe_constant
from core.constants import (
    BACKGROUND_MANIFEST_FILE,
    CHECK_REPORT_FILE,
    CHECK_TABLE_FILE,
    EXIT_CONCLUSION_FAILURE,
    EXIT_HYPOTHESIS_FAILURE,
    EXIT_NUMERICAL_ABORT,
    EXIT_SUCCESS,
    EXIT_USAGE_ERROR,
    YAMABE_REPORT_FILE,
)
from core.estimates import (
    EstimateError,
    HypothesisError,
    brendle_sup_bound_check,
    format_report_table,
    gronwall_closed_form_check,
    l1_estimate_check,
    scalar_lower_preservation_check,
    uniform_convergence_probe,
    volume_bounds_check,
    ye_max_bound_check,
    ye_min_bound_check,
)
from core.experiments import (
    ExperimentAbortError,
    ExperimentError,
    emit_report,
    run_closedness_experiment,
)
from core.expressions import ExpressionError, evaluate_expression
from core.flow import FlowAbortError, FlowConfigError, run_flow
from core.grid import GridError
from core.logger import set_console_level, setup_logger
from core.plots import PlotError, write_monitor_charts
from core.storage import (
    StorageError,
    content_hash,
    read_background,
    read_field_csv,
    read_fields,
    read_manifest,
    read_run_directory,
    read_run_manifest,
    write_background,
    write_json,
    write_run_directory,
)
from core.utils import resolve_thread_count
from models.config import BackgroundSpec, CheckName, CheckSpec, FlowRunSpec, YamabeRunSpec
from models.conformal import Background
from models.env import EnvConfig
from models.experiment import ExperimentSpec
from models.flow import TimeSeries
from models.grid import ScalarField
from models.reports import CheckStatus, EstimateReport

__all__ = [
    "UsageError",
    "build_parser",
    "cmd_background",
    "cmd_flow",
    "cmd_check",
    "cmd_experiment",
    "cmd_yamabe",
    "main",
]

# Use lazy logger initialization to allow test patching
_logger: Optional[logging.Logger] = None

_USAGE_ERRORS = (
    ConfigError,
    EstimateError,
    ExpressionError,
    FlowConfigError,
    GridError,
    ConformalError,
    PlotError,
    StorageError,
)

Handler = Callable[[argparse.Namespace, Optional[EnvConfig]], int]


def _get_logger() -> logging.Logger:
    """Get or create the module logger."""
    global _logger
    if _logger is None:
        _logger = setup_logger("CLI")
    return _logger


class UsageError(Exception):
    """
    Exception raised for invalid command lines.

    Covers unknown flags, malformed values and missing arguments a
    subcommand needs.
    """

    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting with status 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _common_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file")
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a configuration value by dotted key, e.g. --set flow.dt=1e-4",
    )
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument("--threads", type=_positive_int, help="Parallel runs (default: YFL_THREADS, then CPU count)")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors to the console")
    return common


def _add_flow_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=["normalized", "unnormalized"], help="Flow variant")
    parser.add_argument("--dt", type=float, help="Time step")
    parser.add_argument("--horizon", type=float, help="Final time T")
    parser.add_argument("--stepper", choices=["rk4", "semi-implicit"], help="Time discretization")
    parser.add_argument("--monitor-stride", type=_positive_int, help="Steps between monitor samples")
    parser.add_argument("--snapshot-stride", type=int, help="Monitor samples between snapshots (0 = none)")
    parser.add_argument(
        "--snapshot-time",
        dest="snapshot_times",
        type=float,
        action="append",
        help="Keep u at this time (repeatable)",
    )
    parser.add_argument("--dealias", action=argparse.BooleanOptionalAction, help="Filter R with the 2/3 rule")
    parser.add_argument(
        "--charts", action=argparse.BooleanOptionalAction, help="Write SVG charts next to the data"
    )


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subparser per subcommand."""
    common = _common_parser()
    parser = _Parser(
        prog="yamabe-flow-lab",
        description="Yamabe flow experiments on flat tori and conformal backgrounds",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    background = subparsers.add_parser("background", parents=[common], help="Build a background")
    background.add_argument("--kind", choices=["flat", "conformally-flat", "synthetic"], help="Background kind")
    background.add_argument("--n", type=int, help="Manifold dimension")
    background.add_argument("--nodes", type=int, nargs="+", help="Nodes per axis (one value or one per axis)")
    background.add_argument("--period", type=float, nargs="+", help="Axis period (one value or one per axis)")
    background.add_argument("--phi", help="Conformal factor expression (conformally-flat)")
    background.add_argument("--r0", help="Scalar curvature expression (synthetic)")
    background.add_argument("--method", choices=["spectral", "fd"], help="Derivative method")
    background.set_defaults(handler=cmd_background)

    flow = subparsers.add_parser("flow", parents=[common], help="Run the flow on a stored background")
    flow.add_argument("--background", type=Path, help="Background directory")
    flow.add_argument("--u0", help="Initial factor expression")
    flow.add_argument("--u0-file", type=Path, help="Initial factor as field CSV or field container")
    flow.add_argument("--label", help="Run label used in logs")
    _add_flow_flags(flow)
    flow.set_defaults(handler=cmd_flow)

    check = subparsers.add_parser("check", parents=[common], help="Check estimates on stored runs")
    check.add_argument(
        "checks",
        nargs="*",
        metavar="CHECK",
        help=f"Checks to evaluate: {', '.join(c.value for c in CheckName)}",
    )
    check.add_argument("--run", type=Path, help="Run directory")
    check.add_argument("--background", type=Path, help="Background directory (default: the run's)")
    check.add_argument("--other-run", type=Path, help="Second run (l1)")
    check.add_argument("--runs", type=Path, nargs="+", help="Member runs (uniform-convergence)")
    check.add_argument("--limit-run", type=Path, help="Limit run (uniform-convergence)")
    check.add_argument("--probe-time", type=float, help="Snapshot time compared by the probe")
    check.add_argument("--psi", help="Cutoff expression (l1)")
    check.add_argument("--variable", choices=["factor", "fast_diffusion"], help="L1 variable")
    check.add_argument("--kappa", help="Total scalar bound, or 'auto'")
    check.add_argument("--yamabe", help="Yamabe lower bound Y, or 'auto'")
    check.add_argument("--delta", help="Scalar curvature lower bound expression")
    check.add_argument("--sigma", type=float, help="Sigma of the positive-case sup bound")
    check.add_argument("--c0", type=float, help="Two-sided bound C0 (uniform-convergence)")
    check.add_argument("--monotone-from", type=_positive_int, help="First monotone index")
    check.add_argument("--rule", choices=["trapezoid", "simpson"], help="Gronwall quadrature")
    check.add_argument("--tol-abs", type=float, help="Absolute tolerance")
    check.add_argument("--tol-rel", type=float, help="Relative tolerance")
    check.set_defaults(handler=cmd_check)

    experiment = subparsers.add_parser("experiment", parents=[common], help="Run a closedness experiment")
    experiment.add_argument("--name", help="Experiment name")
    experiment.add_argument("--limit", help="Limit factor expression")
    experiment.add_argument("--family", choices=["c0", "lp-only", "l1-bounds"], help="Sequence family")
    experiment.add_argument("--count", type=int, help="Number of members N")
    experiment.add_argument("--kappa", help="Total scalar bound, or 'auto'")
    experiment.add_argument("--delta", help="Scalar curvature lower bound expression, or 'auto'")
    experiment.add_argument("--c0", type=float, help="Two-sided bound C0 (l1-bounds)")
    _add_flow_flags(experiment)
    experiment.set_defaults(handler=cmd_experiment)

    yamabe = subparsers.add_parser("yamabe", parents=[common], help="Estimate the Yamabe constant")
    yamabe.add_argument("--background", type=Path, help="Background directory")
    yamabe.add_argument("--starts", type=_positive_int, help="Random starts")
    yamabe.add_argument("--horizon", type=float, help="Normalized-flow horizon per start")
    yamabe.add_argument("--dt", type=float, help="Time step")
    yamabe.set_defaults(handler=cmd_yamabe)

    return parser


def _one_or_many(values: Optional[list]) -> Any:
    if values is None:
        return None
    return values[0] if len(values) == 1 else values


def _flow_flags(args: argparse.Namespace) -> dict[str, Any]:
    return {
        "mode": args.mode,
        "dt": args.dt,
        "horizon": args.horizon,
        "stepper": args.stepper,
        "monitor_stride": args.monitor_stride,
        "snapshot_stride": args.snapshot_stride,
        "snapshot_times": args.snapshot_times,
        "dealias": args.dealias,
    }


def _require_out(args: argparse.Namespace) -> Path:
    if args.out is None:
        raise UsageError(f"{args.command} needs --out")
    return args.out


def _env_threads(env: Optional[EnvConfig]) -> Optional[int]:
    return env.threads if env is not None else None


# background


def cmd_background(args: argparse.Namespace, env: Optional[EnvConfig] = None) -> int:
    """Build a background and write its container and manifest to --out."""
    flags = {
        "kind": args.kind,
        "n": args.n,
        "nodes": _one_or_many(args.nodes),
        "period": _one_or_many(args.period),
        "phi": args.phi,
        "r0": args.r0,
        "method": args.method,
    }
    spec = load_config(BackgroundSpec, args.config, flags, args.overrides)
    out = _require_out(args)
    bg = build_background(spec)
    write_background(out, bg, background_expressions(spec), content_hash(spec))
    return EXIT_SUCCESS


# flow


def _initial_factor(spec: FlowRunSpec, bg: Background) -> ScalarField:
    """u0 from its expression, a field CSV or a field container."""
    if spec.u0 is not None:
        return evaluate_expression(spec.u0, bg.grid)
    path = spec.u0_file
    if path.suffix.lower() == ".csv":
        return read_field_csv(path, bg.grid)
    grid, fields = read_fields(path)
    if grid != bg.grid:
        raise UsageError(f"{path} lives on a different grid than the background")
    if "u" in fields:
        return fields["u"]
    if len(fields) == 1:
        return next(iter(fields.values()))
    raise UsageError(f"{path} holds {len(fields)} fields and none is named 'u'")


def cmd_flow(args: argparse.Namespace, env: Optional[EnvConfig] = None) -> int:
    """
    Run the flow and write a run directory to --out.

    An aborted run still writes its partial series before the abort is
    re-raised.
    """
    flags = {
        "background": args.background,
        "u0": args.u0,
        "u0_file": args.u0_file,
        "label": args.label,
        "charts": args.charts,
        "flow": _flow_flags(args),
    }
    spec = load_config(FlowRunSpec, args.config, flags, args.overrides)
    out = _require_out(args)
    bg = read_background(spec.background)
    background = read_manifest(spec.background / BACKGROUND_MANIFEST_FILE)
    u0 = _initial_factor(spec, bg)
    config_hash = content_hash({"run": spec.model_dump(mode="json"), "background": background.get("config_hash", "")})

    try:
        series = run_flow(u0, bg, spec.flow, label=spec.label or None)
    except FlowAbortError as e:
        if e.series is not None:
            write_run_directory(out, e.series, spec, config_hash, background=background)
        raise
    write_run_directory(out, series, spec, config_hash, background=background)
    if spec.charts:
        write_monitor_charts(out, series, config_hash)
    return EXIT_SUCCESS


# check


def _run_background(spec: CheckSpec) -> Background:
    """Background given on the command line, else the one the run was made on."""
    if spec.background is not None:
        return read_background(spec.background)
    config = read_run_manifest(spec.run).get("config") or {}
    location = config.get("background") if isinstance(config, dict) else None
    if not location:
        raise UsageError(f"run {spec.run} does not name its background; pass --background")
    return read_background(location)


def _yamabe_lower_bound(series: TimeSeries) -> float:
    # Y >= min(min R0, 0) Vol(g0)^{2/n} by Hölder
    return min(series.r0_min, 0.0) * series.reference_volume ** (2.0 / series.dimension)


def _probe_pairs(spec: CheckSpec) -> list[tuple[ScalarField, ScalarField]]:
    if not spec.runs or spec.limit_run is None:
        raise UsageError("the uniform-convergence check needs --runs and --limit-run")
    t = spec.probe_time or 0.0
    limit = read_run_directory(spec.limit_run).snapshot_at(t)
    if limit is None:
        raise UsageError(f"limit run {spec.limit_run} has no snapshot at t={t:g}")
    pairs = []
    for path in spec.runs:
        snapshot = read_run_directory(path).snapshot_at(t)
        if snapshot is None:
            raise UsageError(f"run {path} has no snapshot at t={t:g}")
        pairs.append((snapshot.u, limit.u))
    return pairs


def _evaluate_check(
    name: CheckName,
    spec: CheckSpec,
    series: TimeSeries,
    background: Callable[[], Background],
) -> EstimateReport:
    """Run one named check with the constants the CheckSpec resolves to."""
    tolerances = {"tol_abs": spec.tolerance_abs, "tol_rel": spec.tolerance_rel}
    first = series.samples[0]
    kappa = first.total_scalar if spec.kappa == "auto" else float(spec.kappa)
    y = _yamabe_lower_bound(series) if spec.yamabe == "auto" else float(spec.yamabe)
    vol = first.volume
    n = series.dimension

    if name is CheckName.GRONWALL:
        factor = (n - 2.0) / ((n - 1.0) * (n + 2.0))
        a = first.u_max ** curvature_exponent(n)
        b = 2.0 * factor * vol * max(kappa, 0.0)
        return gronwall_closed_form_check(series.times(), a, b, rule=spec.rule, **tolerances)
    if name is CheckName.YE_MIN:
        return ye_min_bound_check(series, y, vol, **tolerances)
    if name is CheckName.YE_MAX:
        return ye_max_bound_check(series, kappa, vol, series.r0_min, rule=spec.rule, **tolerances)
    if name is CheckName.SCALAR_LOWER:
        delta: Any = first.inf_scalar
        if spec.delta is not None:
            delta = evaluate_expression(spec.delta, background().grid)
        return scalar_lower_preservation_check(series, delta, **tolerances)
    if name is CheckName.BRENDLE_SUP:
        return brendle_sup_bound_check(series, kappa, vol, spec.sigma, **tolerances)
    if name is CheckName.VOLUME_BOUNDS:
        return volume_bounds_check(series, kappa, y, **tolerances)
    if name is CheckName.L1:
        if spec.other_run is None:
            raise UsageError("the l1 check needs --other-run")
        bg = background()
        other = read_run_directory(spec.other_run)
        psi = evaluate_expression(spec.psi, bg.grid)
        return l1_estimate_check(series, other, psi, bg, variable=spec.variable, **tolerances)
    if spec.c0 is None:
        raise UsageError("the uniform-convergence check needs --c0")
    bg = background()
    return uniform_convergence_probe(
        _probe_pairs(spec), spec.c0, spec.monotone_from, weights=bg.vol_weights, **tolerances
    )


def cmd_check(args: argparse.Namespace, env: Optional[EnvConfig] = None) -> int:
    """
    Evaluate the selected checks and write ``checks.json`` and ``checks.txt``.

    A check whose inputs lie outside its hypotheses is recorded under
    ``hypothesis_failures`` and the remaining checks still run. Results go to
    --out, or into the run directory when --out is omitted.
    """
    flags = {
        "run": args.run,
        "background": args.background,
        "checks": args.checks or None,
        "other_run": args.other_run,
        "runs": args.runs,
        "limit_run": args.limit_run,
        "probe_time": args.probe_time,
        "psi": args.psi,
        "variable": args.variable,
        "kappa": args.kappa,
        "yamabe": args.yamabe,
        "delta": args.delta,
        "sigma": args.sigma,
        "c0": args.c0,
        "monotone_from": args.monotone_from,
        "rule": args.rule,
        "tolerance_abs": args.tol_abs,
        "tolerance_rel": args.tol_rel,
    }
    spec = load_config(CheckSpec, args.config, flags, args.overrides)
    logger = _get_logger()
    series = read_run_directory(spec.run)
    if not series.samples:
        raise UsageError(f"run {spec.run} has no samples")
    run_hash = read_run_manifest(spec.run).get("config_hash", "")

    cached: list[Background] = []

    def background() -> Background:
        if not cached:
            cached.append(_run_background(spec))
        return cached[0]

    reports: list[EstimateReport] = []
    hypothesis_failures: dict[str, str] = {}
    for name in dict.fromkeys(spec.checks):
        try:
            reports.append(_evaluate_check(name, spec, series, background))
        except HypothesisError as e:
            logger.warning(f"{name.value}: outside its hypotheses: {e}")
            hypothesis_failures[name.value] = str(e)

    config_hash = content_hash({"checks": spec.model_dump(mode="json"), "run": run_hash})
    out = args.out or spec.run
    out.mkdir(parents=True, exist_ok=True)
    write_json(
        out / CHECK_REPORT_FILE,
        {
            "config_hash": config_hash,
            "run": str(spec.run),
            "reports": [r.model_dump(mode="json") for r in reports],
            "hypothesis_failures": hypothesis_failures,
        },
    )
    table = format_report_table(reports)
    if hypothesis_failures:
        table += "\n" + "\n".join(f"{name:<22} outside hypotheses: {msg}" for name, msg in hypothesis_failures.items())
    try:
        (out / CHECK_TABLE_FILE).write_text(f"# config_hash={config_hash}\n{table}\n", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write {out / CHECK_TABLE_FILE}: {e}") from e
    print(table)

    statuses = {r.status for r in reports}
    if hypothesis_failures or CheckStatus.PRECONDITION_FAILED in statuses:
        return EXIT_HYPOTHESIS_FAILURE
    if CheckStatus.VIOLATED in statuses:
        return EXIT_CONCLUSION_FAILURE
    return EXIT_SUCCESS


# experiment


def cmd_experiment(args: argparse.Namespace, env: Optional[EnvConfig] = None) -> int:
    """Run a closedness experiment and write its report to --out."""
    flags = {
        "name": args.name,
        "limit": args.limit,
        "family": args.family,
        "count": args.count,
        "kappa": args.kappa,
        "delta": args.delta,
        "c0": args.c0,
        "seed": args.seed,
        "flow": _flow_flags(args),
    }
    spec = load_config(ExperimentSpec, args.config, flags, args.overrides)
    out = _require_out(args)
    explicit = args.threads if args.threads is not None else spec.threads
    threads = resolve_thread_count(explicit, _env_threads(env))
    report = run_closedness_experiment(spec, threads=threads)
    emit_report(report, out, charts=args.charts is not False)
    level = logging.INFO if report.passed else logging.WARNING
    _get_logger().log(
        level,
        f"Experiment {report.name}: {'passed' if report.passed else 'failed'}, "
        f"margin {report.conclusion_margin:.3e}{f' ({report.message})' if report.message else ''}",
    )
    return EXIT_SUCCESS if report.passed else EXIT_CONCLUSION_FAILURE


# yamabe


def cmd_yamabe(args: argparse.Namespace, env: Optional[EnvConfig] = None) -> int:
    """Estimate the Yamabe constant of a background and write ``yamabe.json``."""
    flags = {
        "background": args.background,
        "estimate": {"starts": args.starts, "horizon": args.horizon, "dt": args.dt, "seed": args.seed},
    }
    spec = load_config(YamabeRunSpec, args.config, flags, args.overrides)
    out = _require_out(args)
    bg = read_background(spec.background)
    cfg = spec.estimate
    explicit = args.threads
    if explicit is None and "threads" in cfg.model_fields_set:
        explicit = cfg.threads
    cfg = cfg.model_copy(update={"threads": resolve_thread_count(explicit, _env_threads(env))})

    estimate = estimate_yamabe_constant(bg, cfg)
    out.mkdir(parents=True, exist_ok=True)
    payload = dataclasses.asdict(estimate)
    payload["failures"] = {str(k): v for k, v in sorted(estimate.failures.items())}
    payload["config_hash"] = content_hash(spec.model_dump(mode="json", exclude={"estimate": {"threads"}}))
    write_json(out / YAMABE_REPORT_FILE, payload)
    _get_logger().info(f"Yamabe constant estimate {estimate.value:.6g} (start {estimate.best_start})")
    return EXIT_SUCCESS


def main(argv: Optional[Sequence[str]] = None, env: Optional[EnvConfig] = None) -> int:
    """
    Parse a command line, run the subcommand and map the outcome to an exit code.

    Args:
        argv: Arguments without the program name; ``sys.argv[1:]`` when None
        env: Validated environment; supplies the thread-count fallback

    Returns:
        int: Process exit code
    """
    logger = _get_logger()
    try:
        args = build_parser().parse_args(None if argv is None else list(argv))
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE_ERROR

    if args.quiet:
        set_console_level(logging.WARNING)
    handler: Handler = args.handler
    try:
        return handler(args, env)
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE_ERROR
    except HypothesisError as e:
        logger.error(f"Hypothesis failure: {e}")
        return EXIT_HYPOTHESIS_FAILURE
    except ExperimentError as e:
        logger.error(f"Experiment precondition failed: {e}")
        return EXIT_HYPOTHESIS_FAILURE
    except (FlowAbortError, ExperimentAbortError) as e:
        logger.error(f"Numerical abort: {e}")
        return EXIT_NUMERICAL_ABORT
    except _USAGE_ERRORS as e:
        logger.error(str(e))
        return EXIT_USAGE_ERROR
    finally:
        if args.quiet:
            set_console_level(None)
