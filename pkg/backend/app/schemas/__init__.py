"""
Schemas package initialization.
"""
from app.schemas.experiment import ArmComparison, ExperimentConfig, RunResult, RunSummary, SweepRow
from app.schemas.gate import EstimatorKind, GateParams, SampleTerm
from app.schemas.multictx import GreedyReport, HMonotonicityReport, PathReport, DirectionCosines
from app.schemas.neural import MisalignmentRecord
from app.schemas.tabular import (
    DirectionDiag,
    EmpiricalGapReport,
    GateValues,
    ProgressBoundReport,
    SymmetricBanditSpec,
    TailBoundReport,
)
from app.schemas.verification import CheckResult, VerificationReport

__all__ = [
    # Gate schemas
    "EstimatorKind",
    "GateParams",
    "SampleTerm",

    # Tabular schemas
    "DirectionDiag",
    "EmpiricalGapReport",
    "GateValues",
    "ProgressBoundReport",
    "SymmetricBanditSpec",
    "TailBoundReport",

    # Multi-context schemas
    "GreedyReport",
    "HMonotonicityReport",
    "PathReport",
    "DirectionCosines",

    # Classification schemas
    "MisalignmentRecord",

    # Experiment schemas
    "ArmComparison",
    "ExperimentConfig",
    "RunResult",
    "RunSummary",
    "SweepRow",

    # Verification schemas
    "CheckResult",
    "VerificationReport",
]
