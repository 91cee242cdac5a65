"""
Multi-context analysis reports.
"""
from typing import List, Optional

from pydantic import BaseModel, Field

from app.models.estimator import GreedyObjective


class GreedyReport(BaseModel):
    """Numerical maximizer of the first-order improvement versus the closed-form greedy direction."""

    objective: GreedyObjective
    argmax: List[float]
    predicted: List[float]
    angle: float = Field(..., ge=0.0)
    improvement: float
    tolerance: float = 1e-3

    @property
    def holds(self) -> bool:
        return self.angle <= self.tolerance


class DirectionCosines(BaseModel):
    """Cosines of the DG and PG directions to the CE oracle, two contexts."""

    cos_dg: float
    cos_pg: float
    ratio_dg: float
    ratio_pg: float

    @property
    def holds(self) -> bool:
        return self.cos_dg > self.cos_pg and 1.0 < self.ratio_dg < self.ratio_pg


class PathReport(BaseModel):
    """Phi(t) along the PG to DG interpolation path."""

    degenerate: bool = False
    monotone: bool
    min_increment: float
    phi_start: float
    phi_end: float
    max_identity_error: float = 0.0
    max_fd_error: float = 0.0
    derivative_signs_positive: bool = True

    @property
    def holds(self) -> bool:
        return self.degenerate or (
            self.monotone
            and self.derivative_signs_positive
            and self.max_identity_error < 1e-8
            and self.max_fd_error < 1e-4
        )


class HMonotonicityReport(BaseModel):
    """Whether h(p) = p * sigmoid(-log p / eta) increases on a grid of (0, 1)."""

    eta: float
    increasing: bool
    first_violation: Optional[float] = None
    grid: int
