"""
Tabular service: exact analytics and simulation for the symmetric K-armed bandit.
"""
import time
from functools import partial
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from app.core.exceptions import DomainError
from app.core.logging import get_logger
from app.core.parallel import fan_out
from app.core.rng import derive_rng
from app.core.validators import CountValidator, FiniteValidator, PositiveValidator
from app.models.estimator import EstimatorTag
from app.models.policy import PolicyTable
from app.models.sample import SampleBatch, SeedTrace
from app.schemas.gate import EstimatorKind, GateParams
from app.schemas.tabular import (
    DirectionDiag,
    EmpiricalGapReport,
    GateValues,
    ProgressBoundReport,
    SymmetricBanditSpec,
    TailBoundReport,
)
from app.services.gate_service import GateService

logger = get_logger(__name__)

ZERO_GRADIENT = 1e-12


def cosine_or_zero(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector vanishes."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= ZERO_GRADIENT or nb <= ZERO_GRADIENT:
        return 0.0
    return float(np.clip(np.dot(a.ravel(), b.ravel()) / (na * nb), -1.0, 1.0))


class TabularService:
    """Tabular service class."""

    # Scores and gates

    @staticmethod
    def score(policy: PolicyTable, action: int) -> np.ndarray:
        """phi(a) = e_a - pi."""
        CountValidator.validate_index(action, policy.num_actions)
        out = -policy.probs.copy()
        out[action] += 1.0
        return out

    @staticmethod
    def score_matrix(policy: PolicyTable) -> np.ndarray:
        """Row a is phi(a)."""
        return np.eye(policy.num_actions) - policy.probs[None, :]

    @staticmethod
    def log_prob(logits: np.ndarray, action: int) -> float:
        return float(logits[action] - logsumexp(logits))

    @staticmethod
    def entropy_grad(probs: np.ndarray) -> np.ndarray:
        """Gradient of the policy entropy with respect to the logits (last axis)."""
        logp = np.log(np.maximum(probs, 1e-300))
        entropy = -np.sum(probs * logp, axis=-1, keepdims=True)
        return -probs * (logp + entropy)

    @staticmethod
    def gate_values(spec: SymmetricBanditSpec) -> GateValues:
        """Closed-form w+, w- and s = (1-b) w+ + b w-."""
        params = GateParams(eta=spec.eta)
        b = spec.baseline
        plus = GateService.gate(1.0 - b, GateService.surprisal(spec.correct_prob), params)
        minus = GateService.gate(-b, GateService.surprisal(spec.incorrect_prob), params)
        s = (1.0 - b) * plus.gate + b * minus.gate
        return GateValues(w_plus=plus.gate, w_minus=minus.gate, s=s)

    @staticmethod
    def gap_ratio(spec: SymmetricBanditSpec) -> float:
        """w-^2 / s^2."""
        values = TabularService.gate_values(spec)
        return values.w_minus ** 2 / values.s ** 2

    # Exact expectations by enumeration

    @staticmethod
    def action_coeffs(
        probs: np.ndarray,
        correct: int,
        baseline: float,
        estimator: EstimatorKind,
        params: Optional[GateParams] = None,
    ) -> np.ndarray:
        """omega(a) for every action when a is drawn."""
        params = params or GateParams()
        advantages = -baseline * np.ones_like(probs)
        advantages[correct] += 1.0
        _, gates = GateService.gate_batch(estimator, advantages, GateService.surprisals(probs), params)
        return gates * advantages

    @staticmethod
    def expected_gradient_table(
        policy: PolicyTable,
        correct: int,
        baseline: float,
        estimator: EstimatorKind,
        params: Optional[GateParams] = None,
    ) -> np.ndarray:
        """E_a[omega(a) phi(a)] (+ alpha * grad H for entropy-PG) on any policy."""
        p = policy.probs
        c = TabularService.action_coeffs(p, correct, baseline, estimator, params)
        mean = p * c - np.dot(p, c) * p
        if estimator.tag is EstimatorTag.ENTROPY_PG:
            mean = mean + estimator.entropy_coeff * TabularService.entropy_grad(p)
        return mean

    @staticmethod
    def expected_gradient(spec: SymmetricBanditSpec, estimator: EstimatorKind) -> np.ndarray:
        policy = PolicyTable.symmetric(spec.num_actions, spec.error, spec.correct_action)
        return TabularService.expected_gradient_table(
            policy, spec.correct_action, spec.baseline, estimator, GateParams(eta=spec.eta)
        )

    @staticmethod
    def perpendicular_projector(direction: np.ndarray) -> np.ndarray:
        u = direction / np.linalg.norm(direction)
        return np.eye(direction.shape[0]) - np.outer(u, u)

    @staticmethod
    def perp_variance_table(
        policy: PolicyTable,
        correct: int,
        baseline: float,
        estimator: EstimatorKind,
        params: Optional[GateParams] = None,
    ) -> float:
        """E||Pi_perp g||^2 for a single draw, Pi_perp orthogonal to phi(y*)."""
        phi = TabularService.score_matrix(policy)
        projector = TabularService.perpendicular_projector(phi[correct])
        c = TabularService.action_coeffs(policy.probs, correct, baseline, estimator, params)
        per_action = c[:, None] * phi
        if estimator.tag is EstimatorTag.ENTROPY_PG:
            per_action = per_action + estimator.entropy_coeff * TabularService.entropy_grad(policy.probs)
        perp = per_action @ projector
        return float(np.sum(policy.probs * np.sum(perp ** 2, axis=1)))

    @staticmethod
    def perp_variance(spec: SymmetricBanditSpec, estimator: EstimatorKind) -> DirectionDiag:
        policy = PolicyTable.symmetric(spec.num_actions, spec.error, spec.correct_action)
        params = GateParams(eta=spec.eta)
        mean = TabularService.expected_gradient_table(
            policy, spec.correct_action, spec.baseline, estimator, params
        )
        reference = TabularService.score(policy, spec.correct_action)
        return DirectionDiag(
            perp_variance=TabularService.perp_variance_table(
                policy, spec.correct_action, spec.baseline, estimator, params
            ),
            mean_gradient=mean.tolist(),
            cosine_gap=1.0 - cosine_or_zero(mean, reference),
        )

    @staticmethod
    def symmetry_residual(num_actions: int, error: float, correct: int = 0) -> float:
        """max |sum_{a != y*} phi(a) + ((K-1)(1-eps)/eps) phi(y*)|."""
        policy = PolicyTable.symmetric(num_actions, error, correct)
        phi = TabularService.score_matrix(policy)
        others = phi.sum(axis=0) - phi[correct]
        expected = -((num_actions - 1) * (1.0 - error) / error) * phi[correct]
        return float(np.max(np.abs(others - expected)))

    # Sampling and steps

    @staticmethod
    def sample_batch(
        policy: PolicyTable,
        correct: int,
        baseline: float,
        batch: int,
        rng: np.random.Generator,
        estimator: Optional[EstimatorKind] = None,
        params: Optional[GateParams] = None,
    ) -> SampleBatch:
        """Draw B actions i.i.d.; reward is 1 on the correct action."""
        CountValidator.validate_count(batch, "batch")
        estimator = estimator or EstimatorKind.dg()
        params = params or GateParams()
        actions = rng.choice(policy.num_actions, size=batch, p=policy.probs)
        advantages = (actions == correct).astype(float) - baseline
        surprisals = GateService.surprisals(policy.probs)[actions]
        delights, gates = GateService.gate_batch(estimator, advantages, surprisals, params)
        return SampleBatch(
            actions=actions,
            advantages=advantages,
            surprisals=surprisals,
            delights=delights,
            gates=gates,
        )

    @staticmethod
    def batch_gradient(
        batch: SampleBatch, policy: PolicyTable, estimator: Optional[EstimatorKind] = None
    ) -> np.ndarray:
        """Batch mean of omega_t phi(a_t), from per-action coefficient sums."""
        totals = np.bincount(batch.actions, weights=batch.coeffs, minlength=policy.num_actions)
        grad = (totals - totals.sum() * policy.probs) / batch.size
        if estimator is not None and estimator.tag is EstimatorTag.ENTROPY_PG:
            grad = grad + estimator.entropy_coeff * TabularService.entropy_grad(policy.probs)
        return grad

    @staticmethod
    def normalized_step(logits: np.ndarray, gradient: np.ndarray, step_size: float) -> np.ndarray:
        """z + alpha g / ||g||; z unchanged when ||g|| <= 1e-12."""
        PositiveValidator.validate_positive(step_size, "step_size")
        z = np.asarray(logits, dtype=float)
        g = np.asarray(gradient, dtype=float)
        norm_g = np.linalg.norm(g)
        if norm_g <= ZERO_GRADIENT:
            return z.copy()
        return z + step_size * g / norm_g

    # Runs

    @staticmethod
    def run_bandit_seed(
        seed_index: int,
        spec: SymmetricBanditSpec,
        estimator: EstimatorKind,
        batch: int,
        step_size: float,
        steps: int,
        base_seed: int = 0,
    ) -> SeedTrace:
        """One seed's trace; step t uses the (seed, t) stream."""
        params = GateParams(eta=spec.eta)
        correct = spec.correct_action
        pg = EstimatorKind.pg()
        policy = PolicyTable.symmetric(spec.num_actions, spec.error, correct)
        trace = SeedTrace(seed=seed_index)
        for step in range(1, steps + 1):
            rng = derive_rng(base_seed, seed_index, step)
            sampled = TabularService.sample_batch(
                policy, correct, spec.baseline, batch, rng, estimator, params
            )
            grad = TabularService.batch_gradient(sampled, policy, estimator)
            oracle = TabularService.expected_gradient_table(policy, correct, spec.baseline, pg, params)
            misalignment = 1.0 - cosine_or_zero(grad, oracle)
            if step_size > 0:
                policy = PolicyTable.from_logits(
                    TabularService.normalized_step(policy.logits, grad, step_size)
                )
            trace.record(step, error=1.0 - policy.probs[correct], misalignment=misalignment)
        return trace

    @staticmethod
    def run_symmetric_bandit(
        spec: SymmetricBanditSpec,
        estimator: EstimatorKind,
        batch: int,
        step_size: float,
        steps: int,
        seeds: int,
        base_seed: int = 0,
        workers: int = 1,
    ) -> List[SeedTrace]:
        """Traces of (step, error, misalignment to the exact PG gradient), one per seed."""
        for value, name in ((batch, "batch"), (steps, "steps"), (seeds, "seeds")):
            CountValidator.validate_count(value, name)
        if step_size < 0:
            raise DomainError("step_size must be >= 0")
        started = time.perf_counter()
        job = partial(
            TabularService.run_bandit_seed,
            spec=spec,
            estimator=estimator,
            batch=batch,
            step_size=step_size,
            steps=steps,
            base_seed=base_seed,
        )
        traces = fan_out(job, range(seeds), workers)
        logger.info(
            "bandit.finished",
            estimator=estimator.name,
            seeds=seeds,
            steps=steps,
            elapsed=round(time.perf_counter() - started, 3),
        )
        return traces

    # Checks

    @staticmethod
    def nonsymmetric_tail_bound_check(
        policy: PolicyTable, correct: int, baseline: float, eta: float
    ) -> TailBoundReport:
        """Gate tail bound w(a) <= pi(a)^(b/eta) and the Var_perp bound with exponent 1 + 2b/eta."""
        PositiveValidator.validate_positive(eta, "eta")
        if not 0.0 <= baseline < 1.0:
            raise DomainError("baseline must lie in [0, 1)")
        CountValidator.validate_index(correct, policy.num_actions, "correct")
        params = GateParams(eta=eta)
        p = policy.probs
        wrong = np.arange(policy.num_actions) != correct
        ell = GateService.surprisals(p)
        gates = GateService.sigmoid(-baseline * ell / eta)
        gate_bound = p ** (baseline / eta)
        excess = float(np.max((gates - gate_bound)[wrong]))

        dg = EstimatorKind.dg(eta)
        phi = TabularService.score_matrix(policy)
        projector = TabularService.perpendicular_projector(phi[correct])
        perp_sq = np.sum((phi @ projector) ** 2, axis=1)
        exact = TabularService.perp_variance_table(policy, correct, baseline, dg, params)
        bound = float(np.sum((p ** (1.0 + 2.0 * baseline / eta) * baseline ** 2 * perp_sq)[wrong]))
        tol = 1e-12 * max(1.0, bound)
        return TailBoundReport(
            gate_bound_holds=excess <= 1e-15,
            max_gate_excess=excess,
            variance_bound_holds=exact <= bound + tol,
            perp_variance=exact,
            variance_bound=bound,
        )

    @staticmethod
    def empirical_gap_ratio(
        spec: SymmetricBanditSpec, batch: int, trials: int, rng: np.random.Generator
    ) -> EmpiricalGapReport:
        """Monte-Carlo mean of 1 - cos(g, grad J) for PG and DG on shared draws."""
        CountValidator.validate_count(trials, "trials")
        policy = PolicyTable.symmetric(spec.num_actions, spec.error, spec.correct_action)
        params = GateParams(eta=spec.eta)
        reference = TabularService.score(policy, spec.correct_action)
        pg, dg = EstimatorKind.pg(), EstimatorKind.dg(spec.eta)
        gaps = np.zeros((trials, 2))
        for i in range(trials):
            drawn = TabularService.sample_batch(
                policy, spec.correct_action, spec.baseline, batch, rng, dg, params
            )
            plain = SampleBatch(
                actions=drawn.actions,
                advantages=drawn.advantages,
                surprisals=drawn.surprisals,
                delights=drawn.delights,
                gates=np.ones_like(drawn.gates),
            )
            gaps[i, 0] = 1.0 - cosine_or_zero(TabularService.batch_gradient(plain, policy, pg), reference)
            gaps[i, 1] = 1.0 - cosine_or_zero(TabularService.batch_gradient(drawn, policy, dg), reference)
        gap_pg, gap_dg = gaps.mean(axis=0)
        return EmpiricalGapReport(
            batch=batch,
            trials=trials,
            gap_pg=float(gap_pg),
            gap_dg=float(gap_dg),
            ratio=float(gap_dg / gap_pg) if gap_pg > 0 else None,
            predicted=TabularService.gap_ratio(spec),
        )

    @staticmethod
    def quadratic_step_gain(z: float, step_size: float, gradient: float) -> float:
        """J(z+) - J(z) for J(z) = -z^2/2 after a normalized step along gradient."""
        z_next = float(TabularService.normalized_step(np.array([z]), np.array([gradient]), step_size)[0])
        return -0.5 * z_next ** 2 + 0.5 * z ** 2

    @staticmethod
    def progress_bound_check(z: float, step_size: float, noise: float = 0.0) -> ProgressBoundReport:
        """Expected gain of a normalized step on J(z) = -z^2/2 (L = 1) with g = -z + noise * xi."""
        z = FiniteValidator.validate_finite(z, "z")
        PositiveValidator.validate_positive(step_size, "step_size")
        if noise < 0:
            raise DomainError("noise must be >= 0")
        true_grad = -z
        outcomes: List[Tuple[float, float]] = []
        if noise == 0.0:
            outcomes.append((1.0, true_grad))
        else:
            p_pos = float(norm.sf(0.0, loc=true_grad, scale=noise))
            outcomes.extend([(p_pos, 1.0), (1.0 - p_pos, -1.0)])
        expected_gain = 0.0
        mean_cos = 0.0
        for prob, g in outcomes:
            expected_gain += prob * TabularService.quadratic_step_gain(z, step_size, g)
            mean_cos += prob * cosine_or_zero(np.array([g]), np.array([true_grad]))
        lower = step_size * abs(true_grad) * mean_cos - 0.5 * step_size ** 2
        return ProgressBoundReport(
            expected_improvement=expected_gain, lower_bound=lower, mean_cosine=mean_cos
        )
