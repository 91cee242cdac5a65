"""
Models package initialization.
"""
from app.models.dataset import Dataset
from app.models.ensemble import ContextEnsemble, DirectionSet
from app.models.estimator import (
    BaselineKind,
    EstimatorTag,
    ExpectedMode,
    GreedyObjective,
    OracleArm,
    Testbed,
)
from app.models.policy import AdamState, GaussianPolicy, MlpPolicy, PolicyTable
from app.models.sample import SampleBatch, SeedTrace

__all__ = [
    "Dataset",
    "ContextEnsemble",
    "DirectionSet",
    "BaselineKind",
    "EstimatorTag",
    "ExpectedMode",
    "GreedyObjective",
    "OracleArm",
    "Testbed",
    "AdamState",
    "GaussianPolicy",
    "MlpPolicy",
    "PolicyTable",
    "SampleBatch",
    "SeedTrace",
]
