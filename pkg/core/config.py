"""
Configuration module for yamabe-flow-lab.

Reads YAML run configurations, merges command-line flags and ``--set``
overrides on top, validates the result into the run models and builds
backgrounds from a validated spec.

Precedence, lowest first: config file, explicit flags, ``--set`` overrides.
"""

import logging
import re
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Type, TypeVar, Union

import yaml
from pydantic import BaseModel, ValidationError

from core.conformal import ConformalError, make_background
from core.expressions import ExpressionError, evaluate_expression
from core.grid import GridError, make_grid
from core.logger import setup_logger
from models.config import BackgroundSpec
from models.conformal import Background, BackgroundKind

__all__ = [
    "ConfigError",
    "read_config_mapping",
    "apply_overrides",
    "build_model",
    "load_config",
    "background_expressions",
    "build_background",
]

# Use lazy logger initialization to allow test patching
_logger: Optional[logging.Logger] = None

ModelT = TypeVar("ModelT", bound=BaseModel)

_EXPONENT_FLOAT = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)[eE][-+]?\d+")


def _get_logger() -> logging.Logger:
    """Get or create the module logger."""
    global _logger
    if _logger is None:
        _logger = setup_logger("Config")
    return _logger


class ConfigError(Exception):
    """
    Custom exception for configuration-related errors.

    Raised when a configuration file cannot be read or parsed, an override
    is malformed, or the merged configuration fails validation.
    """

    pass


def read_config_mapping(config_path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a YAML configuration file into a mapping.

    An empty file yields an empty mapping.

    Args:
        config_path: Path to the YAML configuration file

    Returns:
        The parsed top-level mapping

    Raises:
        ConfigError: If the file cannot be read or parsed, or is not a mapping
    """
    path = Path(config_path)

    if not path.exists():
        error_msg = f"Configuration file not found: {config_path}"
        _get_logger().error(error_msg)
        raise ConfigError(error_msg)

    if not path.is_file():
        error_msg = f"Configuration path is not a file: {config_path}"
        _get_logger().error(error_msg)
        raise ConfigError(error_msg)

    try:
        with open(path, "r", encoding="utf-8") as file:
            data = yaml.safe_load(file)

        if data is None:
            _get_logger().warning(f"Configuration file is empty: {config_path}")
            data = {}

        if not isinstance(data, dict):
            error_msg = "Configuration file must contain a YAML dictionary"
            _get_logger().error(error_msg)
            raise ConfigError(error_msg)

        _get_logger().debug(f"Read {len(data)} top-level key(s) from {config_path}")
        return data

    except yaml.YAMLError as e:
        error_msg = f"YAML format error: {e}"
        _get_logger().error(error_msg)
        raise ConfigError(error_msg) from e

    except PermissionError as e:
        error_msg = f"Permission denied reading configuration file: {config_path}"
        _get_logger().error(error_msg)
        raise ConfigError(error_msg) from e

    except ConfigError:
        raise

    except Exception as e:
        error_msg = f"Unexpected error while reading configuration: {e}"
        _get_logger().exception(error_msg)
        raise ConfigError(error_msg) from e


def _parse_scalar(raw: str) -> Any:
    """Parse an override value the way YAML would parse it inline."""
    if _EXPONENT_FLOAT.fullmatch(raw.strip()):
        # YAML 1.1 reads 1e-3 as a string
        return float(raw)
    try:
        return yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError:
        return raw


def apply_overrides(mapping: Mapping[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    Apply ``dotted.key=value`` overrides to a copy of a mapping.

    Values are parsed as inline YAML, so ``flow.dt=1e-3`` gives a float and
    ``checks=[l1, gronwall]`` a list. Intermediate mappings are created as
    needed.

    Raises:
        ConfigError: If an override has no ``=``, an empty key segment, or
            descends into a value that is not a mapping
    """
    result = _deep_copy(mapping)
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override {item!r} must look like key=value")
        parts = key.split(".")
        if any(not part for part in parts):
            raise ConfigError(f"override {item!r} has an empty key segment")

        node = result
        for depth, part in enumerate(parts[:-1]):
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            elif not isinstance(child, dict):
                prefix = ".".join(parts[: depth + 1])
                raise ConfigError(f"override {item!r}: {prefix} is not a mapping")
            node = child
        node[parts[-1]] = _parse_scalar(raw)
        _get_logger().debug(f"Override {key} = {node[parts[-1]]!r}")
    return result


def _deep_copy(mapping: Mapping[str, Any]) -> Dict[str, Any]:
    return {k: _deep_copy(v) if isinstance(v, Mapping) else v for k, v in mapping.items()}


def _merge(base: Mapping[str, Any], top: Mapping[str, Any]) -> Dict[str, Any]:
    merged = _deep_copy(base)
    for key, value in top.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = _deep_copy(value) if isinstance(value, Mapping) else value
    return merged


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def build_model(model_cls: Type[ModelT], mapping: Mapping[str, Any]) -> ModelT:
    """
    Validate a mapping into a run model.

    Raises:
        ConfigError: Naming each offending dotted key
    """
    try:
        return model_cls.model_validate(mapping)
    except ValidationError as e:
        error_msg = f"Invalid {model_cls.__name__} configuration: {_format_validation_error(e)}"
        _get_logger().error(error_msg)
        raise ConfigError(error_msg) from e


def load_config(
    model_cls: Type[ModelT],
    config_path: Optional[Union[str, Path]] = None,
    flags: Optional[Mapping[str, Any]] = None,
    overrides: Sequence[str] = (),
) -> ModelT:
    """
    Build a run model from a config file, flags and overrides.

    Flags whose value is None are treated as not given.

    Args:
        model_cls: Model to validate into
        config_path: Optional YAML file, the lowest-precedence layer
        flags: Explicit command-line values (nested mappings allowed)
        overrides: ``dotted.key=value`` strings, the highest-precedence layer

    Raises:
        ConfigError: If any layer is unreadable or the result is invalid
    """
    mapping: Dict[str, Any] = read_config_mapping(config_path) if config_path else {}
    if flags:
        mapping = _merge(mapping, _drop_none(flags))
    if overrides:
        mapping = apply_overrides(mapping, overrides)
    return build_model(model_cls, mapping)


def _drop_none(flags: Mapping[str, Any]) -> Dict[str, Any]:
    cleaned: Dict[str, Any] = {}
    for key, value in flags.items():
        if isinstance(value, Mapping):
            nested = _drop_none(value)
            if nested:
                cleaned[key] = nested
        elif value is not None:
            cleaned[key] = value
    return cleaned


def background_expressions(spec: BackgroundSpec) -> Dict[str, str]:
    """Expressions a background was built from, keyed by parameter name."""
    expressions = {}
    if spec.phi:
        expressions["phi"] = spec.phi
    if spec.r0:
        expressions["r0"] = spec.r0
    return expressions


def build_background(spec: BackgroundSpec) -> Background:
    """
    Build the background a spec describes.

    Raises:
        ConfigError: If the grid, an expression or the background itself is invalid
    """
    try:
        grid = make_grid(spec.n, spec.nodes, spec.period)
        phi = evaluate_expression(spec.phi, grid) if spec.phi else None
        r0 = evaluate_expression(spec.r0, grid) if spec.r0 else None
    except (GridError, ExpressionError) as e:
        raise ConfigError(f"background: {e}") from e

    provenance = spec.kind.value
    if spec.kind is BackgroundKind.CONFORMALLY_FLAT:
        provenance = f"conformally-flat phi={spec.phi} method={spec.method.value}"
    elif spec.kind is BackgroundKind.SYNTHETIC:
        provenance = f"synthetic r0={spec.r0}"

    try:
        bg = make_background(
            grid, spec.kind, phi=phi, r0=r0, provenance=provenance, method=spec.method
        )
    except ConformalError as e:
        raise ConfigError(f"background: {e}") from e
    _get_logger().info(
        f"Built {spec.kind.value} background on {'x'.join(map(str, grid.nodes_per_axis))} nodes"
    )
    return bg
