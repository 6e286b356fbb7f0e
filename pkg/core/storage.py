"""
Artifact storage for fields, backgrounds and runs.

Formats:

- Field container: ``YFLF`` magic, little-endian header (version, n,
  nodes per axis, periods, field count, field names, config hash) followed
  by one float64 row-major payload per field.
- Field CSV: coordinate columns x1..xn plus one value column, for small grids.
- Manifest: ``key=value`` lines, ``#`` comments ignored.
- Series CSV: ``# config_hash=<hash>`` line, then one row per monitor sample.
- Run directory: series CSV, JSON run manifest and an optional snapshot
  container.

Every writer is deterministic: identical inputs give byte-identical files.
"""

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from core.constants import (
    BACKGROUND_FIELDS_FILE,
    BACKGROUND_MANIFEST_FILE,
    CSV_MAX_NODES,
    FIELD_CONTAINER_MAGIC,
    FIELD_CONTAINER_VERSION,
    RUN_MANIFEST_FILE,
    SERIES_CSV_FILE,
    SNAPSHOTS_FILE,
)
from core.grid import GridError, coordinates, make_grid
from core.logger import setup_logger
from core.utils import format_file_size
from models.conformal import Background, BackgroundKind
from models.flow import MONITOR_COLUMNS, FlowMode, MonitorSample, Snapshot, TimeSeries
from models.grid import GridSpec, ScalarField

__all__ = [
    "StorageError",
    "SERIES_COLUMNS",
    "content_hash",
    "write_fields",
    "read_fields",
    "read_container_hash",
    "write_field_csv",
    "read_field_csv",
    "write_manifest",
    "read_manifest",
    "background_manifest",
    "write_background",
    "read_background",
    "series_frame",
    "write_frame_csv",
    "write_series_csv",
    "read_series_csv",
    "write_json",
    "write_run_manifest",
    "write_run_directory",
    "read_run_manifest",
    "read_run_directory",
]

_logger: Optional[logging.Logger] = None

PathLike = Union[str, Path]

# Exported column names; inf_scalar is published as inf_R.
_COLUMN_RENAMES = {"inf_scalar": "inf_R"}
SERIES_COLUMNS = tuple(_COLUMN_RENAMES.get(c, c) for c in MONITOR_COLUMNS)
_HASH_PREFIX = "# config_hash="
_CSV_FLOAT_FORMAT = "%.17g"

_BACKGROUND_FIELDS = ("r0", "vol_weights", "conformal_to_flat", "potential")


def _get_logger() -> logging.Logger:
    """Get or create the module logger."""
    global _logger
    if _logger is None:
        _logger = setup_logger("Storage")
    return _logger


class StorageError(Exception):
    """
    Exception raised when an artifact cannot be written or read back.

    Covers I/O failures, corrupt or truncated containers, unknown versions
    and files whose contents disagree with their manifest.
    """

    pass


def _jsonable(payload: Any) -> Any:
    if isinstance(payload, BaseModel):
        return payload.model_dump(mode="json")
    return payload


def content_hash(payload: Any) -> str:
    """
    Git-style blob SHA-1 of the canonical JSON form of ``payload``.

    Pydantic models are dumped in JSON mode first, so a config hashes the
    same whether it came from YAML, flags or overrides.
    """
    canonical = json.dumps(
        _jsonable(payload), sort_keys=True, separators=(",", ":"), ensure_ascii=True
    ).encode("utf-8")
    blob = b"blob " + str(len(canonical)).encode("ascii") + b"\0" + canonical
    return hashlib.sha1(blob).hexdigest()


# Field container


def _encode_header(grid: GridSpec, names: list[str], config_hash: str) -> bytes:
    n = grid.dimension
    parts = [
        struct.pack("<4sHH", FIELD_CONTAINER_MAGIC, FIELD_CONTAINER_VERSION, n),
        struct.pack(f"<{n}I", *grid.nodes_per_axis),
        struct.pack(f"<{n}d", *grid.periods),
        struct.pack("<I", len(names)),
    ]
    for name in names:
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
    tag = config_hash.encode("ascii")
    parts.append(struct.pack("<H", len(tag)))
    parts.append(tag)
    return b"".join(parts)


def write_fields(
    path: PathLike, grid: GridSpec, fields: Mapping[str, ScalarField], config_hash: str = ""
) -> Path:
    """
    Write named fields on one grid into a field container.

    Fields keep the mapping's order. ``config_hash`` is stored in the header.

    Raises:
        StorageError: If a field lives on another grid or the file cannot be written.
    """
    path = Path(path)
    names = list(fields)
    for name, f in fields.items():
        if f.grid != grid:
            raise StorageError(f"field {name!r} does not live on the container grid")
    payload = b"".join(
        np.ascontiguousarray(fields[name].values, dtype="<f8").tobytes(order="C") for name in names
    )
    data = _encode_header(grid, names, config_hash) + payload
    try:
        path.write_bytes(data)
    except OSError as e:
        raise StorageError(f"cannot write field container {path}: {e}") from e
    _get_logger().debug(f"Wrote {len(names)} field(s) to {path.name} ({format_file_size(len(data))})")
    return path


class _Reader:
    """Cursor over container bytes that reports truncation."""

    def __init__(self, data: bytes, path: Path) -> None:
        self.data = data
        self.offset = 0
        self.path = path

    def unpack(self, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise StorageError(f"truncated field container {self.path}")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise StorageError(f"truncated field container {self.path}")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk


def _read_container(path: PathLike) -> tuple[GridSpec, dict[str, ScalarField], str]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read field container {path}: {e}") from e

    reader = _Reader(data, path)
    magic, version, n = reader.unpack("<4sHH")
    if magic != FIELD_CONTAINER_MAGIC:
        raise StorageError(f"{path} is not a field container (magic {magic!r})")
    if version != FIELD_CONTAINER_VERSION:
        raise StorageError(f"unsupported field container version {version} in {path}")
    nodes = reader.unpack(f"<{n}I")
    periods = reader.unpack(f"<{n}d")
    (count,) = reader.unpack("<I")
    names = []
    for _ in range(count):
        (length,) = reader.unpack("<H")
        names.append(reader.take(length).decode("utf-8"))
    (tag_length,) = reader.unpack("<H")
    config_hash = reader.take(tag_length).decode("ascii")

    try:
        grid = make_grid(n, list(nodes), list(periods))
    except GridError as e:
        raise StorageError(f"invalid grid header in {path}: {e}") from e

    fields: dict[str, ScalarField] = {}
    size = grid.node_count * 8
    for name in names:
        values = np.frombuffer(reader.take(size), dtype="<f8").reshape(grid.shape)
        try:
            fields[name] = ScalarField(grid, values)
        except ValueError as e:
            raise StorageError(f"field {name!r} in {path}: {e}") from e
    if reader.offset != len(data):
        raise StorageError(f"{len(data) - reader.offset} trailing bytes in {path}")
    return grid, fields, config_hash


def read_fields(path: PathLike) -> tuple[GridSpec, dict[str, ScalarField]]:
    """
    Read a field container.

    Returns:
        The grid from the header and the fields in stored order.

    Raises:
        StorageError: On I/O errors, a wrong magic or version, truncation,
            trailing bytes or an invalid grid header.
    """
    grid, fields, _ = _read_container(path)
    return grid, fields


def read_container_hash(path: PathLike) -> str:
    """Config hash stored in a field container header ("" when none was given)."""
    return _read_container(path)[2]


# Field CSV


def _coordinate_columns(grid: GridSpec) -> list[str]:
    return [f"x{k}" for k in range(1, grid.dimension + 1)]


def write_field_csv(path: PathLike, field: ScalarField, name: str = "u") -> Path:
    """
    Write one field as CSV rows ``x1..xn,<name>`` in row-major node order.

    Raises:
        StorageError: Above CSV_MAX_NODES nodes or on I/O errors.
    """
    path = Path(path)
    grid = field.grid
    if grid.node_count > CSV_MAX_NODES:
        raise StorageError(
            f"grid has {grid.node_count} nodes; CSV export is limited to {CSV_MAX_NODES}, "
            "use the field container instead"
        )
    columns = {c: x.ravel() for c, x in zip(_coordinate_columns(grid), coordinates(grid))}
    columns[name] = field.values.ravel()
    try:
        pd.DataFrame(columns).to_csv(
            path, index=False, float_format=_CSV_FLOAT_FORMAT, lineterminator="\n"
        )
    except OSError as e:
        raise StorageError(f"cannot write field CSV {path}: {e}") from e
    return path


def read_field_csv(path: PathLike, grid: GridSpec, name: Optional[str] = None) -> ScalarField:
    """
    Read a field CSV written for ``grid``.

    The value column is ``name``, or the single non-coordinate column when
    ``name`` is omitted. Coordinates must match the grid nodes in row-major
    order.

    Raises:
        StorageError: On I/O errors, missing columns or coordinates that do
            not match the grid.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, ValueError) as e:
        raise StorageError(f"cannot read field CSV {path}: {e}") from e

    coord_columns = _coordinate_columns(grid)
    missing = [c for c in coord_columns if c not in frame.columns]
    if missing:
        raise StorageError(f"{path} lacks coordinate column(s) {', '.join(missing)}")
    value_columns = [c for c in frame.columns if c not in coord_columns]
    if name is None:
        if len(value_columns) != 1:
            raise StorageError(f"{path} must have exactly one value column, found {value_columns}")
        name = value_columns[0]
    elif name not in frame.columns:
        raise StorageError(f"{path} has no column {name!r}")
    if len(frame) != grid.node_count:
        raise StorageError(f"{path} has {len(frame)} rows, grid has {grid.node_count} nodes")

    for column, x in zip(coord_columns, coordinates(grid)):
        if not np.allclose(frame[column].to_numpy(dtype=float), x.ravel(), rtol=0, atol=1e-9):
            raise StorageError(f"{path}: column {column} does not match the grid nodes")
    try:
        return ScalarField(grid, frame[name].to_numpy(dtype=float))
    except ValueError as e:
        raise StorageError(f"{path}: {e}") from e


# Manifests


def write_manifest(path: PathLike, entries: Mapping[str, Any]) -> Path:
    """
    Write a ``key=value`` manifest in the mapping's order.

    Raises:
        StorageError: On keys containing ``=`` or newlines, or I/O errors.
    """
    path = Path(path)
    lines = []
    for key, value in entries.items():
        text = str(value)
        if "=" in key or "\n" in key or not key.strip():
            raise StorageError(f"invalid manifest key {key!r}")
        if "\n" in text:
            raise StorageError(f"manifest value for {key!r} spans several lines")
        lines.append(f"{key}={text}")
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write manifest {path}: {e}") from e
    return path


def read_manifest(path: PathLike) -> dict[str, str]:
    """
    Read a ``key=value`` manifest.

    Blank lines and ``#`` comments are skipped; values may contain ``=``.

    Raises:
        StorageError: On I/O errors or lines without ``=``.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read manifest {path}: {e}") from e
    entries: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise StorageError(f"{path}:{number}: expected key=value, got {line!r}")
        entries[key.strip()] = value.strip()
    return entries


def _join(values: tuple) -> str:
    return ",".join(repr(v) if isinstance(v, float) else str(v) for v in values)


def background_manifest(
    bg: Background,
    expressions: Optional[Mapping[str, str]] = None,
    config_hash: str = "",
) -> dict[str, str]:
    """Manifest entries describing a background."""
    grid = bg.grid
    entries = {
        "format_version": str(FIELD_CONTAINER_VERSION),
        "kind": bg.kind.value,
        "n": str(grid.dimension),
        "nodes": _join(grid.nodes_per_axis),
        "periods": _join(grid.periods),
        "r0_min": repr(bg.r0.min),
        "r0_max": repr(bg.r0.max),
        "provenance": bg.provenance,
    }
    for key, text in (expressions or {}).items():
        entries[f"expr.{key}"] = text
    entries["config_hash"] = config_hash
    return entries


def write_background(
    directory: PathLike,
    bg: Background,
    expressions: Optional[Mapping[str, str]] = None,
    config_hash: str = "",
) -> dict[str, str]:
    """
    Write a background container and its manifest into ``directory``.

    Returns:
        The manifest entries that were written.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fields = {name: getattr(bg, name) for name in _BACKGROUND_FIELDS}
    if bg.phi is not None:
        fields["phi"] = bg.phi
    write_fields(directory / BACKGROUND_FIELDS_FILE, bg.grid, fields, config_hash)
    entries = background_manifest(bg, expressions, config_hash)
    write_manifest(directory / BACKGROUND_MANIFEST_FILE, entries)
    _get_logger().info(f"Background {bg.kind.value} written to {directory}")
    return entries


def read_background(directory: PathLike) -> Background:
    """
    Rebuild a Background from a directory written by write_background.

    Stored fields are used as-is; nothing is recomputed.

    Raises:
        StorageError: On missing files or a manifest that disagrees with the
            container.
    """
    directory = Path(directory)
    manifest = read_manifest(directory / BACKGROUND_MANIFEST_FILE)
    grid, fields = read_fields(directory / BACKGROUND_FIELDS_FILE)

    try:
        kind = BackgroundKind(manifest.get("kind", ""))
    except ValueError as e:
        raise StorageError(f"unknown background kind in {directory}: {manifest.get('kind')!r}") from e
    if manifest.get("n") != str(grid.dimension) or manifest.get("nodes") != _join(grid.nodes_per_axis):
        raise StorageError(f"manifest and container in {directory} describe different grids")
    missing = [name for name in _BACKGROUND_FIELDS if name not in fields]
    if missing:
        raise StorageError(f"background container in {directory} lacks {', '.join(missing)}")
    if kind is BackgroundKind.CONFORMALLY_FLAT and "phi" not in fields:
        raise StorageError(f"conformally flat background in {directory} lacks phi")

    return Background(
        grid=grid,
        kind=kind,
        r0=fields["r0"],
        vol_weights=fields["vol_weights"],
        conformal_to_flat=fields["conformal_to_flat"],
        potential=fields["potential"],
        phi=fields.get("phi"),
        provenance=manifest.get("provenance", ""),
    )


# Time series


def series_frame(series: TimeSeries) -> pd.DataFrame:
    """Monitor samples as a DataFrame with the exported column names."""
    frame = pd.DataFrame(
        {column: series.column(column) for column in MONITOR_COLUMNS}, columns=list(MONITOR_COLUMNS)
    )
    return frame.rename(columns=_COLUMN_RENAMES)


def write_frame_csv(path: PathLike, frame: pd.DataFrame, config_hash: str = "") -> Path:
    """
    Write a table as CSV behind a ``# config_hash=<hash>`` line.

    Floats use 17 significant digits so the file reads back bit-exactly.
    """
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as handle:
            handle.write(f"{_HASH_PREFIX}{config_hash}\n")
            frame.to_csv(handle, index=False, float_format=_CSV_FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise StorageError(f"cannot write CSV {path}: {e}") from e
    return path


def write_series_csv(path: PathLike, series: TimeSeries, config_hash: str = "") -> Path:
    """Write the monitor samples of a run as CSV."""
    return write_frame_csv(path, series_frame(series), config_hash)


def read_series_csv(path: PathLike) -> tuple[list[MonitorSample], str]:
    """
    Read a series CSV.

    Returns:
        The monitor samples and the embedded config hash.

    Raises:
        StorageError: On I/O errors, a missing hash line or unexpected columns.
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as handle:
            first = handle.readline().rstrip("\n")
            if not first.startswith(_HASH_PREFIX):
                raise StorageError(f"{path} does not start with a config hash line")
            frame = pd.read_csv(handle, float_precision="round_trip")
    except OSError as e:
        raise StorageError(f"cannot read series CSV {path}: {e}") from e
    except ValueError as e:
        raise StorageError(f"malformed series CSV {path}: {e}") from e

    if tuple(frame.columns) != SERIES_COLUMNS:
        raise StorageError(f"{path} has columns {list(frame.columns)}, expected {list(SERIES_COLUMNS)}")
    frame = frame.rename(columns={v: k for k, v in _COLUMN_RENAMES.items()})
    samples = [
        MonitorSample(**{column: float(row[column]) for column in MONITOR_COLUMNS})
        for _, row in frame.iterrows()
    ]
    return samples, first[len(_HASH_PREFIX) :]


def write_json(path: PathLike, payload: Any) -> Path:
    """Write sorted, indented JSON with a trailing newline."""
    path = Path(path)
    try:
        path.write_text(
            json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=True) + "\n",
            encoding="utf-8",
        )
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e
    return path


def _series_metadata(series: TimeSeries) -> dict[str, Any]:
    return {
        "dimension": series.dimension,
        "mode": series.mode.value,
        "dt": series.dt,
        "monitor_stride": series.monitor_stride,
        "background_kind": series.background_kind.value,
        "r0_min": series.r0_min,
        "r0_max": series.r0_max,
        "reference_volume": series.reference_volume,
        "samples": len(series.samples),
        "completed": series.completed,
        "abort_reason": series.abort_reason,
        "label": series.label,
    }


def write_run_manifest(
    path: PathLike,
    series: TimeSeries,
    config: Any,
    config_hash: str,
    background: Optional[Mapping[str, str]] = None,
) -> Path:
    """Write the JSON manifest of one run."""
    payload = {
        "config": _jsonable(config),
        "config_hash": config_hash,
        "background": dict(background or {}),
        "series": _series_metadata(series),
        "snapshot_times": [snap.t for snap in series.snapshots],
    }
    return write_json(path, payload)


def write_run_directory(
    directory: PathLike,
    series: TimeSeries,
    config: Any,
    config_hash: str,
    background: Optional[Mapping[str, str]] = None,
) -> Path:
    """
    Write a run's series CSV, manifest and snapshot container.

    Partial series from aborted runs are written the same way; the manifest
    records ``completed`` and the abort reason.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_series_csv(directory / SERIES_CSV_FILE, series, config_hash)
    write_run_manifest(directory / RUN_MANIFEST_FILE, series, config, config_hash, background)
    snapshots_path = directory / SNAPSHOTS_FILE
    if series.snapshots:
        grid = series.snapshots[0].u.grid
        fields = {f"snapshot_{index:05d}": snap.u for index, snap in enumerate(series.snapshots)}
        write_fields(snapshots_path, grid, fields, config_hash)
    elif snapshots_path.exists():
        snapshots_path.unlink()
    _get_logger().info(
        f"Run {series.label or directory.name} written to {directory} "
        f"({len(series.samples)} samples, {len(series.snapshots)} snapshots)"
    )
    return directory


def read_run_manifest(directory: PathLike) -> dict[str, Any]:
    """
    Parsed JSON manifest of a run directory.

    Raises:
        StorageError: If the manifest is missing or not valid JSON.
    """
    directory = Path(directory)
    try:
        manifest = json.loads((directory / RUN_MANIFEST_FILE).read_text(encoding="utf-8"))
    except OSError as e:
        raise StorageError(f"cannot read run manifest in {directory}: {e}") from e
    except json.JSONDecodeError as e:
        raise StorageError(f"malformed run manifest in {directory}: {e}") from e
    if not isinstance(manifest, dict):
        raise StorageError(f"run manifest in {directory} is not a JSON object")
    return manifest


def read_run_directory(directory: PathLike) -> TimeSeries:
    """
    Reassemble a TimeSeries, with snapshots, from a run directory.

    Raises:
        StorageError: On missing files, inconsistent hashes or a snapshot
            count that disagrees with the manifest.
    """
    directory = Path(directory)
    manifest = read_run_manifest(directory)

    samples, csv_hash = read_series_csv(directory / SERIES_CSV_FILE)
    if csv_hash != manifest.get("config_hash", ""):
        raise StorageError(f"series CSV and manifest in {directory} carry different config hashes")

    try:
        meta = manifest["series"]
        series = TimeSeries(
            dimension=int(meta["dimension"]),
            mode=FlowMode(meta["mode"]),
            dt=float(meta["dt"]),
            monitor_stride=int(meta["monitor_stride"]),
            background_kind=BackgroundKind(meta["background_kind"]),
            r0_min=float(meta["r0_min"]),
            r0_max=float(meta["r0_max"]),
            reference_volume=float(meta["reference_volume"]),
            samples=samples,
            completed=bool(meta["completed"]),
            abort_reason=meta.get("abort_reason"),
            label=meta.get("label", ""),
        )
        times = [float(t) for t in manifest.get("snapshot_times", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise StorageError(f"incomplete run manifest in {directory}: {e}") from e

    if times:
        _, fields = read_fields(directory / SNAPSHOTS_FILE)
        if len(fields) != len(times):
            raise StorageError(
                f"{directory} lists {len(times)} snapshot times but stores {len(fields)} snapshots"
            )
        series.snapshots = [Snapshot(t, u) for t, u in zip(times, fields.values())]
    return series
