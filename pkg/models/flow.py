"""
Flow models.

Defines the time-integration configuration, the per-step state with its
cached monitors and the monitor time series recorded by a run.
"""

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.constants import DEFAULT_RESTABILIZE_EVERY, DEFAULT_STABILITY_SAFETY
from models.conformal import BackgroundKind, ConformalMetric
from models.grid import DerivativeMethod, ScalarField


class FlowMode(str, Enum):
    """Normalized (volume-preserving) or unnormalized Yamabe flow."""

    NORMALIZED = "normalized"
    UNNORMALIZED = "unnormalized"


class Stepper(str, Enum):
    """Time discretization."""

    EXPLICIT_RK4 = "rk4"
    SEMI_IMPLICIT = "semi-implicit"


class FlowConfig(BaseModel):
    """
    Time-integration settings for one run.

    Attributes:
        mode: Flow variant
        dt: Time step
        horizon: Final time T; the run takes round(T/dt) steps
        stepper: Time discretization
        monitor_stride: Steps between monitor samples
        dealias: Filter R with the 2/3 rule before it enters the right-hand side
        snapshot_stride: Keep u at every k-th monitor sample (0 = none)
        snapshot_times: Additional times at which u is kept
        stability_safety: Fraction of the RK4 stability limit dt may use
            before a warning is logged
        restabilize_every: Steps between stability re-estimates
        method: Flat derivative discretization
    """

    mode: FlowMode = Field(..., description="Flow variant")
    dt: float = Field(..., description="Time step", gt=0)
    horizon: float = Field(..., description="Final time T", gt=0)
    stepper: Stepper = Field(default=Stepper.EXPLICIT_RK4, description="Time discretization")
    monitor_stride: int = Field(default=1, description="Steps between monitor samples", ge=1)
    dealias: bool = Field(default=False, description="Apply the 2/3 rule to R")
    snapshot_stride: int = Field(default=0, description="Monitor samples between snapshots", ge=0)
    snapshot_times: tuple[float, ...] = Field(default=(), description="Extra snapshot times")
    stability_safety: float = Field(
        default=DEFAULT_STABILITY_SAFETY, description="Stability guard fraction", gt=0, le=1
    )
    restabilize_every: int = Field(
        default=DEFAULT_RESTABILIZE_EVERY, description="Steps between stability checks", ge=1
    )
    method: DerivativeMethod = Field(default=DerivativeMethod.SPECTRAL, description="Derivatives")

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("snapshot_times")
    @classmethod
    def validate_snapshot_times(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        """Snapshot times must be finite and nonnegative."""
        for t in v:
            if not math.isfinite(t) or t < 0:
                raise ValueError(f"invalid snapshot time: {t}")
        return tuple(sorted(set(v)))

    @model_validator(mode="after")
    def validate_dt_below_horizon(self) -> "FlowConfig":
        """The horizon must hold at least one full step."""
        if self.dt >= self.horizon:
            raise ValueError(f"dt {self.dt} must be smaller than the horizon {self.horizon}")
        for t in self.snapshot_times:
            if t > self.horizon * (1 + 1e-12):
                raise ValueError(f"snapshot time {t} lies beyond the horizon {self.horizon}")
        return self

    @property
    def step_count(self) -> int:
        return max(1, round(self.horizon / self.dt))


@dataclass(frozen=True)
class MonitorSample:
    """
    Scalar monitors of one state.

    Integrals are against dvol_g of the current metric.
    """

    t: float
    volume: float
    r: float
    total_scalar: float
    u_min: float
    u_max: float
    inf_scalar: float
    scalar_sq_integral: float
    scalar_dev_sq_integral: float


MONITOR_COLUMNS = tuple(f.name for f in fields(MonitorSample))


@dataclass(frozen=True, eq=False)
class FlowState:
    """
    Conformal factor at time t with cached curvature monitors.

    ``r`` is the mean scalar curvature in both modes.
    """

    t: float
    metric: ConformalMetric
    scalar: ScalarField
    r: float
    volume: float
    total_scalar: float
    scalar_sq_integral: float
    scalar_dev_sq_integral: float

    @property
    def u(self) -> ScalarField:
        return self.metric.u

    @property
    def u_min(self) -> float:
        return self.metric.u.min

    @property
    def u_max(self) -> float:
        return self.metric.u.max

    @property
    def inf_scalar(self) -> float:
        return self.scalar.min

    def sample(self) -> MonitorSample:
        """Scalar monitors of this state."""
        return MonitorSample(
            t=self.t,
            volume=self.volume,
            r=self.r,
            total_scalar=self.total_scalar,
            u_min=self.u_min,
            u_max=self.u_max,
            inf_scalar=self.inf_scalar,
            scalar_sq_integral=self.scalar_sq_integral,
            scalar_dev_sq_integral=self.scalar_dev_sq_integral,
        )


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Conformal factor kept at time t."""

    t: float
    u: ScalarField


@dataclass(eq=False)
class TimeSeries:
    """
    Monitors of one run, with optional factor snapshots.

    Samples are spaced dt·monitor_stride apart starting at t = 0.
    ``completed`` is False for the partial series carried by an abort.
    """

    dimension: int
    mode: FlowMode
    dt: float
    monitor_stride: int
    background_kind: BackgroundKind
    r0_min: float
    r0_max: float
    reference_volume: float
    samples: list[MonitorSample] = field(default_factory=list)
    snapshots: list[Snapshot] = field(default_factory=list)
    completed: bool = False
    abort_reason: Optional[str] = None
    label: str = ""

    @property
    def sample_spacing(self) -> float:
        return self.dt * self.monitor_stride

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def column(self, name: str) -> np.ndarray:
        """Values of one monitor across samples."""
        if name not in MONITOR_COLUMNS:
            raise KeyError(f"unknown monitor: {name}")
        return np.array([getattr(s, name) for s in self.samples])

    def snapshot_at(self, t: float, rel_tol: float = 1e-9) -> Optional[Snapshot]:
        """Snapshot recorded at time t, if any."""
        scale = max(abs(t), self.dt)
        for snap in self.snapshots:
            if abs(snap.t - t) <= rel_tol * scale:
                return snap
        return None
