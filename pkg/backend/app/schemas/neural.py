"""
Classification record schemas.
"""
from pydantic import BaseModel, Field


class MisalignmentRecord(BaseModel):
    """Per-step diagnostics of a classification run."""

    step: int = Field(..., ge=0)
    miss_pg_oracle: float = Field(..., ge=0.0, le=2.0)
    miss_ce_oracle: float = Field(..., ge=0.0, le=2.0)
    train_error: float = Field(..., ge=0.0, le=1.0)
    val_error: float = Field(..., ge=0.0, le=1.0)
