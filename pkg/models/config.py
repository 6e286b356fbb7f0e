"""
Run configuration models.

Defines the Pydantic models that YAML config files, CLI flags and
``--set`` overrides are validated into before any computation starts.
"""

from enum import Enum
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.constants import DEFAULT_TOL_ABS, DEFAULT_TOL_REL
from models.conformal import BackgroundKind, YamabeEstimateConfig
from models.flow import FlowConfig
from models.grid import DerivativeMethod


class BackgroundSpec(BaseModel):
    """
    Background to build on a periodic grid.

    Attributes:
        n: Manifold dimension
        nodes: Nodes per axis (one value for every axis, or one per axis)
        period: Axis period (one value for every axis, or one per axis)
        kind: Realization of g₀
        phi: Expression for the conformal factor (conformally-flat only)
        r0: Expression for the prescribed R₀ (synthetic only)
        method: Derivative method for R₀ of a conformally flat background
    """

    n: int = Field(default=3, description="Manifold dimension")
    nodes: Union[int, list[int]] = Field(default=16, description="Nodes per axis")
    period: Union[float, list[float]] = Field(default=1.0, description="Axis period")
    kind: BackgroundKind = Field(default=BackgroundKind.FLAT, description="Background realization")
    phi: Optional[str] = Field(default=None, description="Conformal factor expression")
    r0: Optional[str] = Field(default=None, description="Prescribed scalar curvature expression")
    method: DerivativeMethod = Field(default=DerivativeMethod.SPECTRAL, description="Derivatives")

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def validate_kind_parameters(self) -> "BackgroundSpec":
        """Each kind takes exactly its own parameter."""
        if self.kind is BackgroundKind.CONFORMALLY_FLAT and not self.phi:
            raise ValueError("conformally-flat background needs phi")
        if self.kind is BackgroundKind.SYNTHETIC and not self.r0:
            raise ValueError("synthetic background needs r0")
        if self.phi and self.kind is not BackgroundKind.CONFORMALLY_FLAT:
            raise ValueError(f"phi does not apply to a {self.kind.value} background")
        if self.r0 and self.kind is not BackgroundKind.SYNTHETIC:
            raise ValueError(f"r0 does not apply to a {self.kind.value} background")
        return self


class FlowRunSpec(BaseModel):
    """
    One flow run from a stored background.

    Exactly one of ``u0`` (expression) and ``u0_file`` (field CSV or field
    container) gives the initial factor.
    """

    background: Path = Field(..., description="Background directory")
    u0: Optional[str] = Field(default=None, description="Initial factor expression")
    u0_file: Optional[Path] = Field(default=None, description="Initial factor file")
    flow: FlowConfig = Field(..., description="Time integration settings")
    label: str = Field(default="", description="Run label used in logs")
    charts: bool = Field(default=True, description="Write one SVG chart per monitor")

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def validate_initial_factor(self) -> "FlowRunSpec":
        """Require exactly one source for u0."""
        if (self.u0 is None) == (self.u0_file is None):
            raise ValueError("give exactly one of u0 and u0_file")
        return self


class CheckName(str, Enum):
    """Estimate checks available from the command line."""

    GRONWALL = "gronwall"
    YE_MIN = "ye-min"
    YE_MAX = "ye-max"
    SCALAR_LOWER = "scalar-lower"
    BRENDLE_SUP = "brendle-sup"
    VOLUME_BOUNDS = "volume-bounds"
    L1 = "l1"
    UNIFORM_CONVERGENCE = "uniform-convergence"


class CheckSpec(BaseModel):
    """
    Estimate checks on stored runs.

    ``auto`` constants are derived from the run itself: κ from the initial
    total scalar curvature, Y from min(min R₀, 0)·Vol(g₀)^{2/n}, a lower
    bound for the Yamabe constant, and Vol from the initial volume. Without
    ``delta`` the scalar-lower check uses the initial inf R.

    Attributes:
        run: Run directory the checks read
        background: Background directory; the one the run was made on when omitted
        checks: Checks to evaluate
        other_run: Second run for the L¹ estimate
        runs: Member runs for the uniform-convergence probe
        limit_run: Limit run for the uniform-convergence probe
        probe_time: Snapshot time at which the probe compares members
        psi: Cutoff expression for the L¹ estimate
        variable: "factor" or "fast_diffusion" for the L¹ estimate
        kappa: Total scalar bound κ
        yamabe: Lower bound Y for the Yamabe quotient
        delta: Lower bound δ for the scalar curvature
        sigma: Brendle's σ ≥ 1
        c0: Two-sided bound for the uniform-convergence probe
        monotone_from: First index whose sup distance must decrease
        rule: Gronwall quadrature rule
    """

    run: Path = Field(..., description="Run directory")
    background: Optional[Path] = Field(default=None, description="Background directory")
    checks: list[CheckName] = Field(..., description="Checks to evaluate", min_length=1)
    other_run: Optional[Path] = Field(default=None, description="Second run (l1)")
    runs: list[Path] = Field(default_factory=list, description="Member runs (uniform-convergence)")
    limit_run: Optional[Path] = Field(default=None, description="Limit run (uniform-convergence)")
    probe_time: Optional[float] = Field(default=None, description="Probe snapshot time", ge=0)
    psi: str = Field(default="1", description="Cutoff expression (l1)")
    variable: Literal["factor", "fast_diffusion"] = Field(default="factor", description="L¹ variable")
    kappa: Union[float, Literal["auto"]] = Field(default="auto", description="κ")
    yamabe: Union[float, Literal["auto"]] = Field(default="auto", description="Y lower bound")
    delta: Optional[str] = Field(default=None, description="δ expression (scalar-lower)")
    sigma: float = Field(default=1.0, description="σ (brendle-sup)")
    c0: Optional[float] = Field(default=None, description="C₀ (uniform-convergence)")
    monotone_from: int = Field(default=4, description="First monotone index", ge=1)
    rule: Literal["trapezoid", "simpson"] = Field(default="trapezoid", description="Quadrature")
    tolerance_abs: float = Field(default=DEFAULT_TOL_ABS, description="Absolute tolerance", ge=0)
    tolerance_rel: float = Field(default=DEFAULT_TOL_REL, description="Relative tolerance", ge=0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("checks", mode="before")
    @classmethod
    def split_check_list(cls, v: object) -> object:
        """Accept a comma-separated string as well as a list."""
        if isinstance(v, str):
            return [part.strip() for part in v.split(",") if part.strip()]
        return v


class YamabeRunSpec(BaseModel):
    """Yamabe constant estimate on a stored background."""

    background: Path = Field(..., description="Background directory")
    estimate: YamabeEstimateConfig = Field(..., description="Estimate settings")

    model_config = ConfigDict(frozen=True, extra="forbid")
