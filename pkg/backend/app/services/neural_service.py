"""
Neural service: two-layer ReLU softmax policy trained as a one-step contextual bandit.
"""
import time
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import log_softmax, softmax

from app.core.exceptions import DatasetConsistencyError, DomainError
from app.core.logging import get_logger
from app.core.rng import derive_rng
from app.core.validators import CountValidator
from app.models.dataset import Dataset
from app.models.estimator import BaselineKind, EstimatorTag, ExpectedMode, OracleArm
from app.models.policy import AdamState, MlpPolicy
from app.models.sample import SeedTrace
from app.schemas.experiment import ExperimentConfig
from app.schemas.gate import EstimatorKind, GateParams
from app.schemas.neural import MisalignmentRecord
from app.services.data_service import DataService
from app.services.gate_service import GateService
from app.services.tabular_service import TabularService, cosine_or_zero

logger = get_logger(__name__)

Arm = Union[EstimatorKind, OracleArm]


@dataclass
class ForwardPass:
    """Activations of a batch forward pass."""

    inputs: np.ndarray      # B x D
    pre: np.ndarray         # B x H
    hidden: np.ndarray      # B x H
    logits: np.ndarray      # B x K

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits, axis=1)

    @property
    def log_probs(self) -> np.ndarray:
        return log_softmax(self.logits, axis=1)


@dataclass
class ClassificationRun:
    """Per-step trace and final full-split errors of one arm on one seed."""

    trace: SeedTrace
    final_train_error: float
    final_val_error: float
    label_dependent: bool


def _misalignment(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.clip(1.0 - cosine_or_zero(a, b), 0.0, 2.0))


class NeuralService:
    """Neural service class."""

    # Forward and backward

    @staticmethod
    def forward_batch(policy: MlpPolicy, inputs: np.ndarray) -> ForwardPass:
        x = np.atleast_2d(np.asarray(inputs, dtype=float))
        pre = x @ policy.w1.T + policy.b1
        hidden = np.maximum(pre, 0.0)
        logits = hidden @ policy.w2.T + policy.b2
        return ForwardPass(inputs=x, pre=pre, hidden=hidden, logits=logits)

    @staticmethod
    def forward(policy: MlpPolicy, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(probs, hidden) for one input."""
        if not policy.is_finite():
            raise DomainError("policy parameters are not finite")
        out = NeuralService.forward_batch(policy, x)
        return out.probs[0], out.hidden[0]

    @staticmethod
    def weighted_backward(policy: MlpPolicy, out: ForwardPass, dlogits: np.ndarray) -> MlpPolicy:
        """Sum over rows of the backpropagated logit cotangents."""
        dhidden = dlogits @ policy.w2
        dpre = dhidden * (out.pre > 0)
        return MlpPolicy(
            w1=dpre.T @ out.inputs,
            b1=dpre.sum(axis=0),
            w2=dlogits.T @ out.hidden,
            b2=dlogits.sum(axis=0),
        )

    @staticmethod
    def score_grad(policy: MlpPolicy, x: np.ndarray, action: int) -> MlpPolicy:
        """Gradient of log pi(action | x) with respect to every parameter."""
        out = NeuralService.forward_batch(policy, x)
        CountValidator.validate_index(action, out.logits.shape[1])
        dlogits = -out.probs
        dlogits[0, action] += 1.0
        return NeuralService.weighted_backward(policy, out, dlogits)

    @staticmethod
    def log_prob(policy: MlpPolicy, x: np.ndarray, action: int) -> float:
        return float(NeuralService.forward_batch(policy, x).log_probs[0, action])

    # Baselines and oracles

    @staticmethod
    def compute_baseline(
        kind: BaselineKind,
        probs: np.ndarray,
        label: Optional[int] = None,
        mode: ExpectedMode = ExpectedMode.SUM_SQ,
        action: Optional[int] = None,
    ) -> float:
        """Baseline for one input."""
        if kind is BaselineKind.ZERO:
            return 0.0
        if kind is BaselineKind.CONSTANT:
            return 0.5
        if kind is BaselineKind.ORACLE:
            if label is None:
                raise DomainError("the oracle baseline needs the label")
            return float(probs[label])
        if mode is ExpectedMode.MAX_PROB:
            return float(np.max(probs))
        if mode is ExpectedMode.SAMPLED_PROB:
            if action is None:
                raise DomainError("the sampled_prob expected baseline needs the sampled action")
            return float(probs[action])
        return float(np.sum(probs ** 2))

    @staticmethod
    def batch_baselines(
        kind: BaselineKind,
        probs: np.ndarray,
        labels: np.ndarray,
        actions: np.ndarray,
        mode: ExpectedMode = ExpectedMode.SUM_SQ,
    ) -> np.ndarray:
        """B x S baselines, vectorized compute_baseline."""
        rows = np.arange(probs.shape[0])
        shape = actions.shape
        if kind is BaselineKind.ZERO:
            return np.zeros(shape)
        if kind is BaselineKind.CONSTANT:
            return np.full(shape, 0.5)
        if kind is BaselineKind.ORACLE:
            return np.broadcast_to(probs[rows, labels][:, None], shape).copy()
        if mode is ExpectedMode.MAX_PROB:
            per_input = probs.max(axis=1)
        elif mode is ExpectedMode.SAMPLED_PROB:
            return probs[rows[:, None], actions]
        else:
            per_input = np.sum(probs ** 2, axis=1)
        return np.broadcast_to(per_input[:, None], shape).copy()

    @staticmethod
    def oracle_dlogits(probs: np.ndarray, labels: np.ndarray, arm: OracleArm) -> np.ndarray:
        """Batch-mean logit cotangents of g*_PG (p(x) weighted) or g*_CE."""
        rows = np.arange(probs.shape[0])
        d = -probs.copy()
        d[rows, labels] += 1.0
        if arm is OracleArm.PG_ORACLE:
            d *= probs[rows, labels][:, None]
        return d / probs.shape[0]

    @staticmethod
    def sample_actions(probs: np.ndarray, samples: int, rng: np.random.Generator) -> np.ndarray:
        """B x S independent draws, inverse CDF per row."""
        cum = np.cumsum(probs, axis=1)
        u = rng.random((probs.shape[0], samples)) * cum[:, -1:]
        actions = (u[:, :, None] >= cum[:, None, :]).sum(axis=2)
        return np.minimum(actions, probs.shape[1] - 1)

    # Optimizer

    @staticmethod
    def adam_step(policy: MlpPolicy, grad: MlpPolicy, adam: AdamState) -> MlpPolicy:
        """Bias-corrected Adam ascent step; moments updated in place."""
        adam.step += 1
        correction1 = 1.0 - adam.beta1 ** adam.step
        correction2 = 1.0 - adam.beta2 ** adam.step
        updated = []
        for theta, g, m, v in zip(
            policy.parameters(),
            grad.parameters(),
            adam.first_moment.parameters(),
            adam.second_moment.parameters(),
        ):
            m *= adam.beta1
            m += (1.0 - adam.beta1) * g
            v *= adam.beta2
            v += (1.0 - adam.beta2) * g ** 2
            updated.append(theta + adam.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + adam.epsilon))
        return MlpPolicy(*updated)

    # Updates

    @staticmethod
    def estimator_dlogits(
        out: ForwardPass,
        labels: np.ndarray,
        estimator: EstimatorKind,
        baseline: BaselineKind,
        samples: int,
        params: GateParams,
        rng: np.random.Generator,
        mode: ExpectedMode = ExpectedMode.SUM_SQ,
    ) -> np.ndarray:
        """Logit cotangents of the sampled estimator, normalized by B * S."""
        probs, log_probs = out.probs, out.log_probs
        batch, k = probs.shape
        rows = np.arange(batch)[:, None]
        actions = NeuralService.sample_actions(probs, samples, rng)
        rewards = (actions == labels[:, None]).astype(float)
        advantages = rewards - NeuralService.batch_baselines(baseline, probs, labels, actions, mode)
        surprisals = -log_probs[rows, actions]
        _, gates = GateService.gate_batch(estimator, advantages.ravel(), surprisals.ravel(), params)
        coeffs = (gates * advantages.ravel()).reshape(batch, samples)
        totals = np.zeros((batch, k))
        np.add.at(totals, (np.broadcast_to(rows, actions.shape), actions), coeffs)
        dlogits = (totals - totals.sum(axis=1, keepdims=True) * probs) / (batch * samples)
        if estimator.tag is EstimatorTag.ENTROPY_PG:
            dlogits += estimator.entropy_coeff * TabularService.entropy_grad(probs) / batch
        return dlogits

    @staticmethod
    def batch_update(
        policy: MlpPolicy,
        inputs: np.ndarray,
        labels: np.ndarray,
        arm: Arm,
        baseline: BaselineKind,
        samples: int,
        params: GateParams,
        adam: AdamState,
        rng: np.random.Generator,
        mode: ExpectedMode = ExpectedMode.SUM_SQ,
        step: int = 0,
        val_error: float = 0.0,
    ) -> Tuple[MlpPolicy, MisalignmentRecord]:
        """One Adam step; misalignments are measured on the raw gradient.

        ``val_error`` is carried into the record unchanged.
        """
        CountValidator.validate_count(samples, "samples")
        if len(labels) == 0:
            raise DomainError("batch must be nonempty")
        out = NeuralService.forward_batch(policy, inputs)
        probs = out.probs
        ce = NeuralService.weighted_backward(policy, out, NeuralService.oracle_dlogits(probs, labels, OracleArm.CE))
        pg = NeuralService.weighted_backward(
            policy, out, NeuralService.oracle_dlogits(probs, labels, OracleArm.PG_ORACLE)
        )
        if arm is OracleArm.CE:
            grad = ce
        elif arm is OracleArm.PG_ORACLE:
            grad = pg
        else:
            dlogits = NeuralService.estimator_dlogits(out, labels, arm, baseline, samples, params, rng, mode)
            grad = NeuralService.weighted_backward(policy, out, dlogits)
        flat = grad.flat()
        record = MisalignmentRecord(
            step=step,
            miss_pg_oracle=_misalignment(flat, pg.flat()),
            miss_ce_oracle=_misalignment(flat, ce.flat()),
            train_error=float(np.mean(np.argmax(out.logits, axis=1) != labels)),
            val_error=val_error,
        )
        return NeuralService.adam_step(policy, grad, adam), record

    @staticmethod
    def error_rate(policy: MlpPolicy, inputs: np.ndarray, labels: np.ndarray) -> float:
        """Argmax prediction error."""
        if len(labels) == 0:
            raise DatasetConsistencyError("empty split")
        logits = NeuralService.forward_batch(policy, inputs).logits
        return float(np.mean(np.argmax(logits, axis=1) != labels))

    # Runs

    @staticmethod
    def check_dataset(dataset: Dataset) -> None:
        if dataset.inputs.ndim != 2 or dataset.inputs.shape[0] != dataset.labels.shape[0]:
            raise DatasetConsistencyError(
                f"inputs {dataset.inputs.shape} do not match labels {dataset.labels.shape}"
            )
        if dataset.size < 1 or dataset.val_start < 1:
            raise DatasetConsistencyError("dataset has no training rows")
        if not dataset.has_validation:
            raise DatasetConsistencyError("dataset has no validation split")
        if np.any(dataset.labels < 0) or np.any(dataset.labels >= dataset.num_classes):
            raise DatasetConsistencyError("labels outside [0, num_classes)")

    @staticmethod
    def run_classification_experiment(
        config: ExperimentConfig,
        dataset: Dataset,
        arm: Arm,
        baseline: BaselineKind = BaselineKind.EXPECTED,
        samples: int = 1,
        seed_index: int = 0,
    ) -> ClassificationRun:
        """Train one arm for T steps on i.i.d. batches; validation every eval_every steps."""
        NeuralService.check_dataset(dataset)
        started = time.perf_counter()
        steps = config.resolved_steps
        params = GateParams(eta=config.eta, whiten=config.whiten)
        policy = MlpPolicy.initialize(
            dataset.input_dim, config.width, dataset.num_classes, derive_rng(config.base_seed, seed_index)
        )
        adam = AdamState.for_policy(policy, config.learning_rate)
        val_error = NeuralService.error_rate(policy, dataset.val_inputs, dataset.val_labels)
        trace = SeedTrace(seed=seed_index)
        for step in range(1, steps + 1):
            rng = derive_rng(config.base_seed, seed_index, step)
            idx = DataService.sample_batch_indices(dataset, config.batch, rng)
            policy, record = NeuralService.batch_update(
                policy,
                dataset.inputs[idx],
                dataset.labels[idx],
                arm,
                baseline,
                samples,
                params,
                adam,
                rng,
                config.expected_mode,
                step=step,
                val_error=val_error,
            )
            if step % config.eval_every == 0 or step == steps:
                val_error = NeuralService.error_rate(policy, dataset.val_inputs, dataset.val_labels)
                record = record.model_copy(update={"val_error": val_error})
            trace.record(
                step,
                train_error=record.train_error,
                val_error=record.val_error,
                miss_pg_oracle=record.miss_pg_oracle,
                miss_ce_oracle=record.miss_ce_oracle,
            )
        if not policy.is_finite():
            raise DomainError("training diverged to non-finite parameters")
        run = ClassificationRun(
            trace=trace,
            final_train_error=NeuralService.error_rate(policy, dataset.train_inputs, dataset.train_labels),
            final_val_error=val_error,
            label_dependent=isinstance(arm, OracleArm) or baseline.label_dependent,
        )
        logger.info(
            "classify.finished",
            arm=getattr(arm, "name", str(arm)),
            seed=seed_index,
            baseline=baseline.value,
            samples=samples,
            train_error=run.final_train_error,
            elapsed=round(time.perf_counter() - started, 3),
        )
        return run

    @staticmethod
    def oracle_floor_arm(config: ExperimentConfig, dataset: Dataset, seed_index: int = 0) -> ClassificationRun:
        """Follow g*_PG exactly on each batch."""
        return NeuralService.run_classification_experiment(
            config, dataset, OracleArm.PG_ORACLE, seed_index=seed_index
        )
