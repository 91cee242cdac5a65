"""
Closed-form analytics endpoints.
"""
from typing import List

from fastapi import APIRouter, Query
from pydantic import BaseModel, Field

from app.dependencies import http_errors
from app.schemas.multictx import DirectionCosines
from app.schemas.tabular import SymmetricBanditSpec
from app.services.multictx_service import MultiContextService
from app.services.tabular_service import TabularService

router = APIRouter()


class GateValuesResponse(BaseModel):
    """Gates on a symmetric bandit and the squared-norm gap ratio."""
    num_actions: int
    error: float
    w_plus: float
    w_minus: float
    s: float
    gap_ratio: float


class DirectionsRequest(BaseModel):
    """Two contexts with correct-action probabilities p1, p2."""
    p1: float = Field(..., gt=0, lt=1)
    p2: float = Field(..., gt=0, lt=1)
    eta: float = Field(1.0, gt=0)
    norms: List[float] = Field(default_factory=lambda: [1.0, 1.0], min_length=2, max_length=2)


@router.get("/gate-values", response_model=GateValuesResponse)
def gate_values(
    num_actions: int = Query(100, ge=3),
    error: float = Query(0.5, gt=0, lt=1),
    baseline: float = Query(0.5, ge=0, lt=1),
    eta: float = Query(1.0, gt=0),
):
    """Closed-form w+, w-, s and gap ratio."""
    with http_errors():
        spec = SymmetricBanditSpec(num_actions=num_actions, error=error, baseline=baseline, eta=eta)
        gates = TabularService.gate_values(spec)
        return GateValuesResponse(
            num_actions=num_actions,
            error=error,
            w_plus=gates.w_plus,
            w_minus=gates.w_minus,
            s=gates.s,
            gap_ratio=TabularService.gap_ratio(spec),
        )


@router.post("/directions", response_model=DirectionCosines)
def directions(request: DirectionsRequest):
    """Cosines of the DG and PG directions to the CE direction."""
    with http_errors():
        return MultiContextService.direction_cosines(request.p1, request.p2, request.eta, request.norms)
