"""
Grid and field models.

Defines the validated periodic grid description and the immutable
scalar field carried by every numerical operation.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.constants import MIN_DIMENSION, MIN_NODES_PER_AXIS


class DerivativeMethod(str, Enum):
    """Discretization used for flat derivatives."""

    SPECTRAL = "spectral"
    FD = "fd"


class GridSpec(BaseModel):
    """
    Uniform periodic grid on a flat n-torus.

    Attributes:
        dimension: Manifold dimension n (at least 3)
        nodes_per_axis: Node count along each axis
        periods: Period L_k of each axis
    """

    dimension: int = Field(..., description="Manifold dimension n")
    nodes_per_axis: tuple[int, ...] = Field(..., description="Nodes along each axis")
    periods: tuple[float, ...] = Field(..., description="Period of each axis")

    model_config = ConfigDict(frozen=True)

    @field_validator("dimension")
    @classmethod
    def validate_dimension(cls, v: int) -> int:
        """Reject dimensions the conformal exponents are undefined for."""
        if v < MIN_DIMENSION:
            raise ValueError("dimension below 3")
        return v

    @field_validator("nodes_per_axis")
    @classmethod
    def validate_nodes(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        """Require enough nodes per axis for 4th-order stencils."""
        for count in v:
            if count < MIN_NODES_PER_AXIS:
                raise ValueError(
                    f"too few nodes: every axis needs at least {MIN_NODES_PER_AXIS}, got {count}"
                )
        return v

    @field_validator("periods")
    @classmethod
    def validate_periods(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        """Require strictly positive finite periods."""
        for period in v:
            if not math.isfinite(period) or period <= 0:
                raise ValueError(f"nonpositive period: {period}")
        return v

    @model_validator(mode="after")
    def validate_axis_count(self) -> "GridSpec":
        """Every axis needs a node count and a period."""
        if len(self.nodes_per_axis) != self.dimension or len(self.periods) != self.dimension:
            raise ValueError(
                f"expected {self.dimension} node counts and periods, got "
                f"{len(self.nodes_per_axis)} and {len(self.periods)}"
            )
        return self

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes_per_axis

    @property
    def node_count(self) -> int:
        return math.prod(self.nodes_per_axis)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(p / m for p, m in zip(self.periods, self.nodes_per_axis))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def flat_volume(self) -> float:
        return math.prod(self.periods)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    Values of a real function at the nodes of a periodic grid.

    The array has shape ``grid.shape``; its C-order flattening is the
    row-major node ordering used by every export format. The array is
    made read-only on construction.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.size != self.grid.node_count:
            raise ValueError(
                f"field has {values.size} values, grid has {self.grid.node_count} nodes"
            )
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def min(self) -> float:
        return float(self.values.min())

    @property
    def max(self) -> float:
        return float(self.values.max())

    def with_values(self, values: np.ndarray) -> "ScalarField":
        """Return a field on the same grid with new values."""
        return ScalarField(self.grid, values)


@dataclass(frozen=True)
class FieldDistances:
    """Distances between two fields on the same grid."""

    sup_distance: float
    l1_distance: float
    lp_distance: float
    p: float
