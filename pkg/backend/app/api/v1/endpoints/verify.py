"""
Verification endpoints.
"""
from typing import Optional

from fastapi import APIRouter, Depends, Query

from app.core.config import Settings
from app.dependencies import get_settings, http_errors
from app.schemas.verification import VerificationReport
from app.services.verification_service import VerificationService

router = APIRouter()


@router.get("/", response_model=VerificationReport)
def run_verification(
    seed: Optional[int] = Query(None, ge=0),
    config: Settings = Depends(get_settings),
):
    """Run every analytic check and return the report."""
    with http_errors():
        return VerificationService.cmd_verify(seed=config.VERIFY_SEED if seed is None else seed)
