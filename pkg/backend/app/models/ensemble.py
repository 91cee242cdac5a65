"""
Multi-context ensembles and their oracle directions.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax


@dataclass
class ContextEnsemble:
    """N independent contexts; row n of the logits is context n's parameter block."""

    logits: np.ndarray   # N x K
    correct: np.ndarray  # N

    @classmethod
    def standard_normal(cls, num_contexts: int, num_actions: int, rng: np.random.Generator) -> "ContextEnsemble":
        """N(0,1) logits, correct action 0 in every context."""
        return cls(
            logits=rng.standard_normal((num_contexts, num_actions)),
            correct=np.zeros(num_contexts, dtype=int),
        )

    @property
    def num_contexts(self) -> int:
        return self.logits.shape[0]

    @property
    def num_actions(self) -> int:
        return self.logits.shape[1]

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits, axis=1)

    @property
    def correct_probs(self) -> np.ndarray:
        """p_n = pi_n(y_n)."""
        return self.probs[np.arange(self.num_contexts), self.correct]

    def score_vectors(self) -> np.ndarray:
        """v_n = e_{y_n} - pi_n, one row per context block."""
        v = -self.probs
        v[np.arange(self.num_contexts), self.correct] += 1.0
        return v

    def __repr__(self) -> str:
        return f"<ContextEnsemble(N={self.num_contexts}, K={self.num_actions})>"


@dataclass(frozen=True)
class DirectionSet:
    """The CE, PG and DG population directions, as N x K matrices."""

    ce: np.ndarray
    pg: np.ndarray
    dg: np.ndarray
    weights: np.ndarray  # N x 3: (1, p_n, h(p_n))
