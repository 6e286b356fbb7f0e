"""
Closedness experiment models.

An ExperimentSpec describes a sequence uᵢ → u of conformal factors on one
background, the flow every member is run through, and the constants the
closedness conclusion is checked against. A ClosednessReport carries the
verdict and everything needed to audit it.
"""

from enum import Enum
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.config import BackgroundSpec
from models.flow import FlowConfig
from models.reports import EstimateReport

OPERATOR_LEVEL_LABEL = "operator-level"


class SequenceFamily(str, Enum):
    """How the members uᵢ approach the limit u."""

    C0_CONVERGENT = "c0"
    LP_ONLY = "lp-only"
    L1_WITH_BOUNDS = "l1-bounds"


class ExperimentSpec(BaseModel):
    """
    One closedness experiment.

    The schedule sᵢ (i = 1..count) is ``amplitudes`` when given, otherwise a
    base value times i^(-decay). It means the perturbation size for the C⁰
    family, the bump radius for the Lᵖ family and the oscillation amplitude
    for the bounded L¹ family.

    Attributes:
        name: Experiment name used in logs and reports
        background: Background the members live on
        limit: Expression for the limit factor u
        family: Sequence family
        count: Number of members N
        amplitude: Base perturbation size of the C⁰ family
        amplitude_decay: Schedule decay of the C⁰ and Lᵖ families
        amplitudes: Explicit schedule overriding base and decay
        bump_radius: Base bump radius of the Lᵖ family
        bump_height: Bump height of the Lᵖ family
        oscillation: Base oscillation amplitude of the L¹ family
        oscillation_decay: Schedule decay of the L¹ family
        kappa: Total scalar bound κ, or "auto" for maxᵢ ∫R(gᵢ) dvol
        delta: Lower bound δ for R (expression or "auto"); required on a
            positive synthetic background
        c0: Two-sided bound C₀ of the L¹ family
        flow: Flow settings shared by every run
        seed: Seed of the C⁰ family perturbation
        monotone_from: First index whose sup distance at t★ must not grow
        tolerance: Tolerance of the conclusion margin
        invariant_tolerance: Relative tolerance of per-run flow invariants
        t_star_fraction: t★ as a fraction of the horizon
        threads: Parallel runs; the caller's thread count when omitted
    """

    name: str = Field(default="experiment", description="Experiment name")
    background: BackgroundSpec = Field(default_factory=BackgroundSpec, description="Background")
    limit: str = Field(default="1", description="Limit factor expression")
    family: SequenceFamily = Field(default=SequenceFamily.C0_CONVERGENT, description="Family")
    count: int = Field(default=8, description="Number of members", ge=0)
    amplitude: float = Field(default=0.1, description="C0 perturbation size", ge=0)
    amplitude_decay: float = Field(default=1.0, description="Schedule decay", ge=0)
    amplitudes: Optional[list[float]] = Field(default=None, description="Explicit schedule")
    bump_radius: float = Field(default=0.5, description="Base bump radius", gt=0)
    bump_height: float = Field(default=1.0, description="Bump height", gt=0)
    oscillation: float = Field(default=0.3, description="Base oscillation amplitude", ge=0)
    oscillation_decay: float = Field(default=0.5, description="Oscillation decay", ge=0)
    kappa: Union[float, Literal["auto"]] = Field(default="auto", description="κ")
    delta: Optional[str] = Field(default=None, description="δ expression or 'auto'")
    c0: Optional[float] = Field(default=None, description="C₀", ge=1)
    flow: FlowConfig = Field(..., description="Flow settings")
    seed: int = Field(default=0, description="Perturbation seed")
    monotone_from: int = Field(default=3, description="First monotone index", ge=1)
    tolerance: float = Field(default=1e-6, description="Conclusion tolerance", ge=0)
    invariant_tolerance: float = Field(default=1e-6, description="Flow invariant tolerance", ge=0)
    t_star_fraction: float = Field(default=0.5, description="t★ / T", gt=0, le=1)
    threads: Optional[int] = Field(default=None, description="Parallel runs", ge=1)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def validate_family_parameters(self) -> "ExperimentSpec":
        """Schedule length and family constants must be consistent."""
        if self.amplitudes is not None:
            if len(self.amplitudes) != self.count:
                raise ValueError(f"amplitudes has {len(self.amplitudes)} entries, count is {self.count}")
            if any(a < 0 for a in self.amplitudes):
                raise ValueError("amplitudes must be nonnegative")
            if self.family is SequenceFamily.LP_ONLY and any(a <= 0 for a in self.amplitudes):
                raise ValueError("bump radii must be positive")
        if self.family is SequenceFamily.L1_WITH_BOUNDS and self.c0 is None:
            raise ValueError("the l1-bounds family needs c0")
        return self

    def schedule(self) -> list[float]:
        """The schedule s₁..s_N."""
        if self.amplitudes is not None:
            return list(self.amplitudes)
        if self.family is SequenceFamily.C0_CONVERGENT:
            base, decay = self.amplitude, self.amplitude_decay
        elif self.family is SequenceFamily.LP_ONLY:
            base, decay = self.bump_radius, self.amplitude_decay
        else:
            base, decay = self.oscillation, self.oscillation_decay
        return [base * i ** (-decay) for i in range(1, self.count + 1)]


class RunSummary(BaseModel):
    """
    Per-run outcome inside an experiment.

    Distances compare the run with the limit run; they are None for the
    limit itself.
    """

    index: int = Field(..., description="0 for the limit, i for member i")
    label: str = Field(..., description="Run label")
    total_scalar: float = Field(..., description="∫R dvol at t = 0")
    volume: float = Field(..., description="Volume at t = 0")
    inf_scalar: float = Field(..., description="inf R at t = 0")
    volume_ratio: Optional[float] = Field(default=None, description="Vol(gᵢ) / Vol(g)")
    volume_comparable: Optional[bool] = Field(default=None, description="½ ≤ ratio ≤ 2")
    delta_margin: Optional[float] = Field(default=None, description="min (R - δ) at t = 0")
    sup_distance_initial: Optional[float] = Field(default=None, description="sup |uᵢ - u| at t = 0")
    l1_distance_initial: Optional[float] = Field(default=None, description="L¹ distance at t = 0")
    lp_distance_initial: Optional[float] = Field(default=None, description="Lᵖ distance at t = 0")
    sup_distance_t_star: Optional[float] = Field(default=None, description="sup distance at t★")
    volume_drift: float = Field(..., description="Relative volume drift")
    monotone_increase: float = Field(..., description="Worst increase of the monotone monitor")
    invariants_hold: bool = Field(..., description="Flow invariants within tolerance")


class ClosednessReport(BaseModel):
    """
    Verdict of one closedness experiment.

    ``passed`` requires the conclusion margin κ - ∫R(g) dvol ≥ -tolerance,
    sup distances at t★ that do not grow from ``monotone_from`` on, and flow
    invariants holding on every run. ``monotone_strict`` records whether those
    distances strictly decrease. The remaining fields, including the initial
    continuity check and the uniform convergence probe, are recorded for
    inspection and do not gate ``passed``. Run time series are kept in
    ``series`` and never serialized.
    """

    name: str
    family: SequenceFamily
    count: int
    labels: list[str] = Field(default_factory=list)
    kappa: float
    kappa_auto: bool
    member_total_scalar: list[float] = Field(default_factory=list)
    limit_total_scalar: float
    conclusion_margin: float
    hypothesis_margin: Optional[float] = Field(
        default=None, description="κ - maxᵢ ∫R(gᵢ) dvol"
    )
    schedule: list[float] = Field(default_factory=list)
    t_star: float
    sup_distances_initial: list[float] = Field(default_factory=list)
    l1_distances_initial: list[float] = Field(default_factory=list)
    lp_distances_initial: list[float] = Field(default_factory=list)
    sup_distances_t_star: list[float] = Field(default_factory=list)
    monotone_from: int
    monotone_holds: bool
    monotone_strict: bool = Field(default=False, description="Sup distances at t★ strictly decrease")
    limit_bound_margin: float = Field(..., description="κ - max ∫R(g(t)) dvol over t > 0")
    delta_min: Optional[float] = None
    lower_bound_margin: Optional[float] = Field(default=None, description="inf R(g) - min δ")
    initial_continuity_error: Optional[float] = Field(
        default=None, description="Relative change of the limit's ∫R dvol over the first sample"
    )
    initial_continuity_holds: Optional[bool] = Field(default=None, description="Informational; not part of passed")
    probe: Optional[EstimateReport] = None
    runs: list[RunSummary] = Field(default_factory=list)
    config_hash: str = ""
    passed: bool
    message: str = ""
    series: dict[str, Any] = Field(default_factory=dict, exclude=True, repr=False)

    model_config = ConfigDict(arbitrary_types_allowed=True)
