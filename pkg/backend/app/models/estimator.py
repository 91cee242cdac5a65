"""
Estimator, baseline and testbed enumerations.
"""
from enum import Enum as PyEnum


class EstimatorTag(str, PyEnum):
    """Gradient estimator variant."""
    PG = "pg"
    DG = "dg"
    ENTROPY_PG = "entropy-pg"
    UCB_ADDITIVE = "ucb"
    SURPRISAL_EXPONENT = "se"


class OracleArm(str, PyEnum):
    """Label-dependent arms that follow an oracle direction exactly."""
    CE = "ce"
    PG_ORACLE = "pg-oracle"


class BaselineKind(str, PyEnum):
    """Baseline subtracted from the reward."""
    ZERO = "zero"
    CONSTANT = "constant"
    EXPECTED = "expected"
    ORACLE = "oracle"

    @property
    def label_dependent(self) -> bool:
        return self is BaselineKind.ORACLE


class ExpectedMode(str, PyEnum):
    """How the agent estimates its own success probability."""
    SUM_SQ = "sum_sq"
    MAX_PROB = "max_prob"
    SAMPLED_PROB = "sampled_prob"


class Testbed(str, PyEnum):
    """Experiment family."""
    VERIFY = "verify"
    BANDIT = "bandit"
    MULTICTX = "multictx"
    CLASSIFY = "classify"
    SWEEP = "sweep"


class GreedyObjective(str, PyEnum):
    """Objective whose first-order improvement is maximized."""
    SUM_P = "sum_p"
    SUM_LOG_P = "sum_log_p"
