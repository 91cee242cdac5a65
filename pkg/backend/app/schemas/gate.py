"""
Gate schemas: temperature parameters, per-sample terms, estimator variants.
"""
import math
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.estimator import EstimatorTag


class GateParams(BaseModel):
    """Gate temperature and continuous-action clip bound."""
    model_config = ConfigDict(frozen=True)

    eta: float = Field(1.0, gt=0, description="Gate temperature")
    logdensity_clip: float = Field(10.0, gt=0, description="Clip bound C on continuous surprisal")
    whiten: bool = Field(False, description="Standardize batch delights before gating")


class SampleTerm(BaseModel):
    """One sampled action's advantage, surprisal, delight and gate.

    The gate lies in (0, 1) mathematically but float64 saturates it to
    exactly 0.0 or 1.0 for large |delight / eta|, so the closed interval
    is accepted. GateService.log_gate gives the unsaturated log value.
    """
    model_config = ConfigDict(frozen=True)

    action: Optional[Union[int, float]] = None
    advantage: float
    surprisal: float
    delight: float
    gate: float = Field(..., ge=0.0, le=1.0)
    effective_coeff: float

    @model_validator(mode="after")
    def check_consistency(self):
        if self.delight != self.advantage * self.surprisal:
            raise ValueError("delight must equal advantage * surprisal")
        if self.advantage == 0.0 and self.effective_coeff != 0.0:
            raise ValueError("zero advantage must give a zero coefficient")
        return self


class EstimatorKind(BaseModel):
    """Estimator variant; parameters not used by a variant stay None."""
    model_config = ConfigDict(frozen=True)

    tag: EstimatorTag
    alpha: Optional[float] = None
    eta: Optional[float] = Field(None, gt=0)
    beta: Optional[float] = None

    @model_validator(mode="after")
    def check_parameters(self):
        if self.tag is EstimatorTag.ENTROPY_PG:
            if self.alpha is None or self.alpha < 0:
                raise ValueError("entropy-pg needs alpha >= 0")
        elif self.tag is EstimatorTag.UCB_ADDITIVE:
            if self.alpha is None or not 0.0 <= self.alpha <= 1.25:
                raise ValueError("ucb needs alpha in [0, 1.25]")
        elif self.tag is EstimatorTag.SURPRISAL_EXPONENT:
            if self.beta is None or self.beta < 0 or not math.isfinite(self.beta):
                raise ValueError("surprisal exponent needs beta >= 0")
        return self

    @classmethod
    def pg(cls) -> "EstimatorKind":
        return cls(tag=EstimatorTag.PG)

    @classmethod
    def dg(cls, eta: Optional[float] = None) -> "EstimatorKind":
        return cls(tag=EstimatorTag.DG, eta=eta)

    @classmethod
    def entropy_pg(cls, alpha: float) -> "EstimatorKind":
        return cls(tag=EstimatorTag.ENTROPY_PG, alpha=alpha)

    @classmethod
    def ucb_additive(cls, alpha: float, eta: Optional[float] = None) -> "EstimatorKind":
        return cls(tag=EstimatorTag.UCB_ADDITIVE, alpha=alpha, eta=eta)

    @classmethod
    def surprisal_exponent(cls, beta: float, eta: Optional[float] = None) -> "EstimatorKind":
        return cls(tag=EstimatorTag.SURPRISAL_EXPONENT, beta=beta, eta=eta)

    @property
    def gated(self) -> bool:
        """PG and entropy-PG run with the gate forced to 1."""
        return self.tag not in (EstimatorTag.PG, EstimatorTag.ENTROPY_PG)

    @property
    def entropy_coeff(self) -> float:
        return self.alpha if self.tag is EstimatorTag.ENTROPY_PG else 0.0

    @property
    def name(self) -> str:
        if self.tag is EstimatorTag.ENTROPY_PG:
            return f"entropy-pg{self.alpha:g}"
        if self.tag is EstimatorTag.UCB_ADDITIVE:
            return f"ucb{self.alpha:g}"
        if self.tag is EstimatorTag.SURPRISAL_EXPONENT:
            return f"se{self.beta:g}"
        return self.tag.value
