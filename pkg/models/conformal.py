"""
Conformal geometry models.

Defines the reference geometry g₀, metrics in its conformal class and the
Yamabe-constant estimate inputs and result.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from core.constants import (
    DEFAULT_YAMABE_AMPLITUDE,
    DEFAULT_YAMABE_MAX_MODE,
    DEFAULT_YAMABE_STARTS,
    POSITIVITY_FLOOR,
)
from models.grid import GridSpec, ScalarField


class BackgroundKind(str, Enum):
    """How the reference metric g₀ is realized on the torus grid."""

    FLAT = "flat"
    CONFORMALLY_FLAT = "conformally-flat"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True, eq=False)
class Background:
    """
    Reference geometry g₀ on a periodic grid.

    Attributes:
        grid: Grid the fields live on
        kind: Realization of g₀
        r0: Scalar curvature of g₀
        vol_weights: dvol_{g₀} density against the flat measure
        conformal_to_flat: Factor w with g₀ = w^{4/(n-2)} g_flat
        potential: Zeroth-order term of the flat-chart conformal Laplacian
            (R₀ for SYNTHETIC, zero otherwise)
        phi: Conformal factor of a CONFORMALLY_FLAT background
        provenance: Free text describing how the background was built
    """

    grid: GridSpec
    kind: BackgroundKind
    r0: ScalarField
    vol_weights: ScalarField
    conformal_to_flat: ScalarField
    potential: ScalarField
    phi: Optional[ScalarField] = None
    provenance: str = ""

    @property
    def dimension(self) -> int:
        return self.grid.dimension


@dataclass(frozen=True, eq=False)
class ConformalMetric:
    """The metric g = u^{4/(n-2)} g₀ for a positive factor u."""

    background: Background
    u: ScalarField

    def __post_init__(self) -> None:
        if self.u.grid != self.background.grid:
            raise ValueError("conformal factor and background live on different grids")
        if self.u.min <= POSITIVITY_FLOOR:
            raise ValueError(
                f"conformal factor below positivity floor {POSITIVITY_FLOOR:g}: min {self.u.min:g}"
            )


class YamabeEstimateConfig(BaseModel):
    """Inputs for the flow-based Yamabe constant estimate."""

    starts: int = Field(default=DEFAULT_YAMABE_STARTS, description="Random starts", ge=1)
    horizon: float = Field(..., description="Normalized-flow horizon per start", gt=0)
    dt: Optional[float] = Field(
        default=None,
        description="Time step; half the RK4 stability estimate when omitted",
        gt=0,
    )
    seed: int = Field(default=0, description="Seed of the random starts")
    amplitude: float = Field(
        default=DEFAULT_YAMABE_AMPLITUDE,
        description="Sup deviation of each start from 1",
        gt=0,
        lt=1,
    )
    max_mode: int = Field(default=DEFAULT_YAMABE_MAX_MODE, description="Highest mode", ge=1)
    threads: int = Field(default=1, description="Parallel starts", ge=1)

    model_config = ConfigDict(frozen=True, extra="forbid")


@dataclass(frozen=True)
class YamabeEstimate:
    """
    Numerical upper bound on the Yamabe constant.

    Attributes:
        value: Smallest final Yamabe quotient over the successful starts
        best_start: Index of the start that achieved it
        quotients: Final quotient per start (None where the run aborted)
        failures: Abort message per failed start index
        seed: Seed the starts were drawn from
    """

    value: float
    best_start: int
    quotients: tuple[Optional[float], ...]
    failures: dict[int, str] = field(default_factory=dict)
    seed: int = 0
