"""
Policy parameterizations: logit tables, the MLP classifier and the Gaussian unit.
"""
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.special import softmax

from app.core.validators import CountValidator, ProbabilityValidator


@dataclass(frozen=True)
class PolicyTable:
    """Logits and softmax probabilities over K actions for one context."""

    logits: np.ndarray
    probs: np.ndarray

    @classmethod
    def from_logits(cls, logits) -> "PolicyTable":
        z = np.asarray(logits, dtype=float)
        return cls(logits=z, probs=softmax(z))

    @classmethod
    def from_probs(cls, probs) -> "PolicyTable":
        p = ProbabilityValidator.validate_simplex(probs)
        with np.errstate(divide="ignore"):
            z = np.log(p)
        return cls(logits=z, probs=p)

    @classmethod
    def symmetric(cls, num_actions: int, error: float, correct: int = 0) -> "PolicyTable":
        """pi(correct) = 1 - error, error/(K-1) on every other action."""
        CountValidator.validate_count(num_actions, "num_actions", minimum=2)
        CountValidator.validate_index(correct, num_actions, "correct")
        probs = np.full(num_actions, error / (num_actions - 1))
        probs[correct] = 1.0 - error
        return cls(logits=np.log(probs), probs=probs)

    @property
    def num_actions(self) -> int:
        return self.probs.shape[0]

    def __repr__(self) -> str:
        return f"<PolicyTable(K={self.num_actions})>"


@dataclass
class MlpPolicy:
    """Two-layer ReLU network; parameter-shaped gradients reuse this class."""

    w1: np.ndarray  # H x D
    b1: np.ndarray  # H
    w2: np.ndarray  # K x H
    b2: np.ndarray  # K

    @classmethod
    def initialize(cls, input_dim: int, hidden: int, num_classes: int, rng: np.random.Generator) -> "MlpPolicy":
        """He-scaled hidden layer, 1/H output layer, zero biases."""
        return cls(
            w1=rng.standard_normal((hidden, input_dim)) * np.sqrt(2.0 / input_dim),
            b1=np.zeros(hidden),
            w2=rng.standard_normal((num_classes, hidden)) * np.sqrt(1.0 / hidden),
            b2=np.zeros(num_classes),
        )

    @property
    def dims(self) -> Tuple[int, int, int]:
        """(D, H, K)."""
        return self.w1.shape[1], self.w1.shape[0], self.w2.shape[0]

    def parameters(self) -> Tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def with_flat(self, vector: np.ndarray) -> "MlpPolicy":
        parts = []
        offset = 0
        for p in self.parameters():
            parts.append(np.asarray(vector[offset:offset + p.size], dtype=float).reshape(p.shape))
            offset += p.size
        return MlpPolicy(*parts)

    def zeros_like(self) -> "MlpPolicy":
        return MlpPolicy(*(np.zeros_like(p) for p in self.parameters()))

    def copy(self) -> "MlpPolicy":
        return MlpPolicy(*(p.copy() for p in self.parameters()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def __repr__(self) -> str:
        d, h, k = self.dims
        return f"<MlpPolicy(D={d}, H={h}, K={k})>"


@dataclass
class AdamState:
    """Adam moments shaped like the policy."""

    first_moment: MlpPolicy
    second_moment: MlpPolicy
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0

    @classmethod
    def for_policy(cls, policy: MlpPolicy, learning_rate: float = 1e-3) -> "AdamState":
        return cls(
            first_moment=policy.zeros_like(),
            second_moment=policy.zeros_like(),
            learning_rate=learning_rate,
        )


@dataclass
class GaussianPolicy:
    """Diagonal Gaussian over continuous actions."""

    mean: np.ndarray
    log_std: np.ndarray = field(default=None)

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if self.log_std is None:
            self.log_std = np.zeros_like(self.mean)
        self.log_std = np.atleast_1d(np.asarray(self.log_std, dtype=float))

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]
