"""
Symmetric bandit schemas.
"""
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SymmetricBanditSpec(BaseModel):
    """Single-context K-armed bandit with pi(y*) = 1 - eps, eps/(K-1) elsewhere."""
    model_config = ConfigDict(frozen=True)

    num_actions: int = Field(..., ge=3)
    error: float = Field(..., gt=0.0, lt=1.0)
    baseline: float = Field(0.5, ge=0.0, lt=1.0)
    eta: float = Field(1.0, gt=0.0)
    correct_action: int = Field(0, ge=0)

    @model_validator(mode="after")
    def check_correct_action(self):
        if self.correct_action >= self.num_actions:
            raise ValueError("correct_action must be < num_actions")
        return self

    @property
    def correct_prob(self) -> float:
        return 1.0 - self.error

    @property
    def incorrect_prob(self) -> float:
        return self.error / (self.num_actions - 1)


class GateValues(BaseModel):
    """Closed-form gates on the correct and incorrect arms and the scale s."""
    model_config = ConfigDict(frozen=True)

    w_plus: float
    w_minus: float
    s: float = Field(..., gt=0.0)


class DirectionDiag(BaseModel):
    """Perpendicular variance and mean gradient of one estimator."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    perp_variance: float = Field(..., ge=0.0)
    mean_gradient: List[float]
    cosine_gap: float = Field(..., ge=0.0, le=2.0)


class TailBoundReport(BaseModel):
    """Outcome of the non-symmetric tail bound on one policy."""

    gate_bound_holds: bool
    max_gate_excess: float
    variance_bound_holds: bool
    perp_variance: float
    variance_bound: float

    @property
    def holds(self) -> bool:
        return self.gate_bound_holds and self.variance_bound_holds


class EmpiricalGapReport(BaseModel):
    """Monte-Carlo cosine gaps of PG and DG at one batch size."""

    batch: int
    trials: int
    gap_pg: float
    gap_dg: float
    ratio: Optional[float] = None
    predicted: float


class ProgressBoundReport(BaseModel):
    """Expected one-step improvement against its cosine lower bound."""

    expected_improvement: float
    lower_bound: float
    mean_cosine: float

    @property
    def holds(self) -> bool:
        return self.expected_improvement >= self.lower_bound - 1e-12
