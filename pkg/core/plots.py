"""
Static SVG line charts for monitors and distance curves.

Charts are drawn on a standalone Figure (no pyplot state), so runs on
worker threads can plot safely. Output is deterministic: the SVG id salt is
fixed, the date metadata is dropped and text stays text.
"""

from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from models.flow import MONITOR_COLUMNS, TimeSeries

__all__ = [
    "PlotError",
    "write_line_chart",
    "write_monitor_charts",
]

_SVG_RC = {
    "svg.hashsalt": "yamabe-flow-lab",
    "svg.fonttype": "none",
    "path.simplify": False,
}


class PlotError(Exception):
    """Exception raised when a chart cannot be built or written."""

    pass


def write_line_chart(
    path: Union[str, Path],
    x: Sequence[float],
    curves: Mapping[str, Sequence[float]],
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    config_hash: str = "",
    log_y: bool = False,
) -> Path:
    """
    Write one SVG line chart with a curve per mapping entry.

    The config hash is stored in the SVG description metadata. With ``log_y``
    nonpositive values are left out of the curve.

    Raises:
        PlotError: If a curve length differs from ``x`` or the file cannot be written.
    """
    path = Path(path)
    xs = np.asarray(x, dtype=float)
    with matplotlib.rc_context(_SVG_RC):
        fig = Figure(figsize=(6.4, 4.0))
        ax = fig.add_subplot()
        for label, values in curves.items():
            ys = np.asarray(values, dtype=float)
            if ys.shape != xs.shape:
                raise PlotError(f"curve {label!r} has {ys.size} points, x has {xs.size}")
            if log_y:
                ys = np.where(ys > 0, ys, np.nan)
            ax.plot(xs, ys, marker="o", markersize=3, linewidth=1.2, label=label)
        if log_y:
            ax.set_yscale("log")
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, linewidth=0.4, alpha=0.5)
        if len(curves) > 1:
            ax.legend(fontsize="small")
        fig.tight_layout()
        try:
            fig.savefig(
                path,
                format="svg",
                metadata={
                    "Date": None,
                    "Creator": "yamabe-flow-lab",
                    "Description": f"config_hash={config_hash}",
                },
            )
        except OSError as e:
            raise PlotError(f"cannot write chart {path}: {e}") from e
    return path


def write_monitor_charts(
    directory: Union[str, Path],
    series: TimeSeries,
    config_hash: str = "",
    columns: Optional[Sequence[str]] = None,
) -> list[Path]:
    """
    Write one chart per monitor column against t.

    Files are named ``monitor_<column>.svg``.
    """
    directory = Path(directory)
    times = series.times()
    written = []
    for column in columns or [c for c in MONITOR_COLUMNS if c != "t"]:
        title = f"{column} ({series.label})" if series.label else column
        written.append(
            write_line_chart(
                directory / f"monitor_{column}.svg",
                times,
                {column: series.column(column)},
                title=title,
                xlabel="t",
                ylabel=column,
                config_hash=config_hash,
            )
        )
    return written
