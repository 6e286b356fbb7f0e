"""
Estimate report models.

Every inequality check produces one EstimateReport: the verdict on the
conclusion, whether the data-level hypotheses held, and the per-sample
margins the verdict was taken from.
"""

from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator


class CheckStatus(str, Enum):
    """Outcome of an inequality check."""

    HOLDS = "holds"
    VIOLATED = "violated"
    PRECONDITION_FAILED = "precondition_failed"


class EstimateReport(BaseModel):
    """
    Result of one inequality check.

    Margins are signed: positive means slack, negative means the inequality
    is violated by that amount. ``holds`` refers to the conclusion only;
    ``precondition_met`` records whether the data satisfied the hypotheses
    the inequality is stated under.

    Attributes:
        name: Check identifier
        holds: worst_margin ≥ -tolerance
        precondition_met: Data-level hypotheses held
        status: Combined verdict
        worst_margin: Smallest margin over the samples
        worst_time: Sample time (or index) of the smallest margin
        tolerance: tolerance_abs + tolerance_rel·max|bound|
        tolerance_abs: Absolute tolerance
        tolerance_rel: Relative tolerance
        parameters: Constants the check was evaluated with
        times: Sample times (or indices)
        margins: Margin per sample
        message: Human-readable note
    """

    name: str = Field(..., description="Check identifier")
    holds: bool = Field(..., description="Conclusion holds within tolerance")
    precondition_met: bool = Field(default=True, description="Hypotheses held on the data")
    status: CheckStatus = Field(..., description="Combined verdict")
    worst_margin: float = Field(..., description="Smallest signed margin")
    worst_time: float = Field(..., description="Where the smallest margin occurred")
    tolerance: float = Field(..., description="Effective tolerance", ge=0)
    tolerance_abs: float = Field(..., description="Absolute tolerance", ge=0)
    tolerance_rel: float = Field(..., description="Relative tolerance", ge=0)
    parameters: dict[str, Any] = Field(default_factory=dict, description="Evaluated constants")
    times: list[float] = Field(default_factory=list, description="Sample times")
    margins: list[float] = Field(default_factory=list, description="Margin per sample")
    message: str = Field(default="", description="Note")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def validate_verdict(self) -> "EstimateReport":
        """The verdict must agree with the worst margin."""
        if self.holds != (self.worst_margin >= -self.tolerance):
            raise ValueError("holds disagrees with worst_margin and tolerance")
        return self
