"""
Continuous-action gate on a diagonal Gaussian policy.
"""
from typing import Optional

import numpy as np
from scipy.stats import norm

from app.core.logging import get_logger
from app.core.rng import derive_rng
from app.core.validators import CountValidator, PositiveValidator
from app.models.policy import GaussianPolicy
from app.models.sample import SeedTrace
from app.schemas.gate import EstimatorKind, GateParams
from app.services.gate_service import GateService

logger = get_logger(__name__)


class ContinuousService:
    """Continuous service class."""

    @staticmethod
    def log_density(policy: GaussianPolicy, actions: np.ndarray) -> np.ndarray:
        """Per-row log density of (n, d) actions."""
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        return norm.logpdf(actions, loc=policy.mean, scale=policy.std).sum(axis=1)

    @staticmethod
    def sample(policy: GaussianPolicy, count: int, rng: np.random.Generator) -> np.ndarray:
        CountValidator.validate_count(count, "count")
        return policy.mean + policy.std * rng.standard_normal((count, policy.dim))

    @staticmethod
    def score(policy: GaussianPolicy, actions: np.ndarray):
        """(d log pi / d mean, d log pi / d log_std) per row."""
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        z = (actions - policy.mean) / policy.std
        return z / policy.std, z ** 2 - 1.0

    @staticmethod
    def gated_update(
        policy: GaussianPolicy,
        actions: np.ndarray,
        advantages: np.ndarray,
        params: GateParams,
        step_size: float,
        estimator: Optional[EstimatorKind] = None,
    ) -> GaussianPolicy:
        """One ascent step on sum w U grad log pi / n with clipped density surprisal."""
        PositiveValidator.validate_positive(step_size, "step_size")
        estimator = estimator or EstimatorKind.dg(params.eta)
        advantages = np.asarray(advantages, dtype=float)
        surprisals = GateService.clip_surprisal(
            ContinuousService.log_density(policy, actions), params.logdensity_clip
        )
        _, gates = GateService.gate_batch(estimator, advantages, surprisals, params)
        coeffs = gates * advantages
        d_mean, d_log_std = ContinuousService.score(policy, actions)
        n = advantages.shape[0]
        return GaussianPolicy(
            mean=policy.mean + step_size * (coeffs @ d_mean) / n,
            log_std=policy.log_std + step_size * (coeffs @ d_log_std) / n,
        )

    @staticmethod
    def run_gaussian_bandit(
        target: np.ndarray,
        steps: int,
        batch: int = 64,
        step_size: float = 0.05,
        params: Optional[GateParams] = None,
        estimator: Optional[EstimatorKind] = None,
        seed: int = 0,
    ) -> SeedTrace:
        """Reward -||a - target||^2 with a batch-mean baseline."""
        CountValidator.validate_count(steps, "steps")
        params = params or GateParams()
        target = np.atleast_1d(np.asarray(target, dtype=float))
        policy = GaussianPolicy(mean=np.zeros_like(target))
        trace = SeedTrace(seed=seed)
        for step in range(1, steps + 1):
            rng = derive_rng(seed, 0, step)
            actions = ContinuousService.sample(policy, batch, rng)
            rewards = -np.sum((actions - target) ** 2, axis=1)
            policy = ContinuousService.gated_update(
                policy, actions, rewards - rewards.mean(), params, step_size, estimator
            )
            trace.record(
                step,
                distance=float(np.linalg.norm(policy.mean - target)),
                mean_std=float(policy.std.mean()),
            )
        logger.debug("gaussian.finished", steps=steps, distance=trace.final("distance"))
        return trace
