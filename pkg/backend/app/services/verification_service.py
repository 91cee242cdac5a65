"""
Verification service: every analytic property as a seeded PASS/FAIL check.
"""
import math
from enum import Enum as PyEnum
from functools import partial
from typing import Callable, Dict, List, Optional, Tuple, Type

import numpy as np
from pydantic import ValidationError
from scipy.special import expit
from scipy.stats import norm

from app.core.config import settings
from app.core.exceptions import DelightError
from app.core.logging import get_logger
from app.core.metrics import CHECKS_TOTAL
from app.core.rng import derive_rng
from app.models.estimator import BaselineKind, GreedyObjective
from app.models.policy import GaussianPolicy, MlpPolicy, PolicyTable
from app.schemas.gate import EstimatorKind, GateParams
from app.schemas.tabular import SymmetricBanditSpec
from app.schemas.verification import CheckResult, VerificationReport
from app.services.continuous_service import ContinuousService
from app.services.gate_service import GateService
from app.services.multictx_service import MultiContextService
from app.services.neural_service import NeuralService
from app.services.tabular_service import TabularService, cosine_or_zero

logger = get_logger(__name__)

Outcome = Tuple[bool, float, str]

GAP_CASES = ((0.5, 4, 0.0413), (0.1, 1, 0.0128))
DIRECTION_ETAS = (0.6, 1.0, 2.0)


class FaultMode(str, PyEnum):
    """Deliberate defects for exercising the harness itself."""
    GATE_SIGN = "gate-sign"


class SignFlippedGates(GateService):
    """GateService whose sigmoid sees the negated delight."""

    @staticmethod
    def sigmoid(x):
        return GateService.sigmoid(np.negative(x))


FAULTY_GATES: Dict[FaultMode, Type[GateService]] = {FaultMode.GATE_SIGN: SignFlippedGates}


def gates_for(mode: Optional[FaultMode]) -> Type[GateService]:
    """The gate implementation the gate checks run against."""
    return GateService if mode is None else FAULTY_GATES[mode]


def _relative(a: np.ndarray, b: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


class VerificationService:
    """Verification service class."""

    # Gate

    @staticmethod
    def check_gate_antisymmetry(rng: np.random.Generator, gates: Type[GateService] = GateService) -> Outcome:
        chi = rng.uniform(-50, 50, size=1000)
        eta = rng.uniform(0.01, 10, size=1000)
        worst = float(np.max(np.abs(gates.sigmoid(chi / eta) + gates.sigmoid(-chi / eta) - 1.0)))
        return worst <= 1e-12, worst, ""

    @staticmethod
    def check_temperature_limits(rng: np.random.Generator, gates: Type[GateService] = GateService) -> Outcome:
        params_hot = GateParams(eta=1e6)
        hot = max(abs(gates.gate(chi, 1.0, params_hot).gate - 0.5) for chi in np.linspace(-10, 10, 41))
        cold = GateParams(eta=1e-6)
        opened = 1.0 - gates.gate(0.01, 1.0, cold).gate
        closed = gates.gate(-0.01, 1.0, cold).gate
        worst = max(hot - 1e-5, opened - 1e-6, closed - 1e-6)
        return hot <= 1e-5 and opened < 1e-6 and closed < 1e-6, max(worst, 0.0), f"hot={hot:.2e}"

    @staticmethod
    def check_potential_derivative(rng: np.random.Generator, gates: Type[GateService] = GateService) -> Outcome:
        h = 1e-5
        worst = 0.0
        for chi in rng.uniform(-5, 5, size=200):
            eta = float(rng.uniform(0.2, 5.0))
            fd = (GateService.softplus_potential(chi + h, eta) - GateService.softplus_potential(chi - h, eta)) / (2 * h)
            worst = max(worst, abs(fd - gates.sigmoid(chi / eta)))
        return worst <= 1e-6, worst, ""

    @staticmethod
    def check_gate_optimality(rng: np.random.Generator, gates: Type[GateService] = GateService) -> Outcome:
        grid = 10_001
        worst_arg, worst_val = 0.0, 0.0
        for chi, eta in ((0.0, 1.0), (1.0, 1.0), (-4.0, 0.5), (3.0, 2.0), (-1.5, 0.7), (-40.0, 1.0)):
            w, value = GateService.verify_gate_optimality(chi, eta, grid)
            worst_arg = max(worst_arg, abs(w - gates.sigmoid(chi / eta)))
            worst_val = max(worst_val, abs(value - GateService.softplus_potential(chi, eta)))
        return worst_arg <= 2.0 / grid and worst_val <= 1e-6, max(worst_arg, worst_val), ""

    @staticmethod
    def check_gate_examples(rng: np.random.Generator, gates: Type[GateService] = GateService) -> Outcome:
        params = GateParams()
        cases = [
            (gates.gate(1.0, math.log(2.0), params).gate, 2.0 / 3.0),
            (gates.gate(1.0, -math.log(0.9), params).gate, 1.0 / 1.9),
            (gates.gate(0.0, 5.0, params).effective_coeff, 0.0),
            (gates.gate_continuous(1.0, -15.0, params).gate, 1.0 / (1.0 + math.exp(-10.0))),
            (gates.gate_continuous(1.0, 3.0, params).gate, 1.0 / (1.0 + math.exp(3.0))),
            (gates.gate_continuous(0.0, 7.5, params).gate, 0.5),
        ]
        worst = max(abs(got - want) for got, want in cases)
        return worst <= 1e-12, worst, ""

    @staticmethod
    def check_variant_closure(rng: np.random.Generator, gates: Type[GateService] = GateService) -> Outcome:
        u = rng.normal(size=500)
        ell = rng.exponential(2.0, size=500)
        se = gates.delight_variant(EstimatorKind.surprisal_exponent(1.0), u, ell)
        dg = gates.delight_variant(EstimatorKind.dg(), u, ell)
        ucb = gates.delight_variant(EstimatorKind.ucb_additive(0.0), u, ell)
        worst = float(max(np.max(np.abs(se - dg)), np.max(np.abs(ucb - u))))
        return worst == 0.0, worst, ""

    # Tabular

    @staticmethod
    def check_symmetry_identity(rng: np.random.Generator) -> Outcome:
        worst = max(
            TabularService.symmetry_residual(k, eps)
            for k in (3, 10, 100)
            for eps in (0.01, 0.1, 0.5, 0.9)
        )
        return worst <= 1e-10, worst, ""

    @staticmethod
    def check_score_identity(rng: np.random.Generator) -> Outcome:
        worst = 0.0
        for k in (2, 5, 50):
            policy = PolicyTable.from_logits(rng.normal(size=k) * 3)
            total = policy.probs @ TabularService.score_matrix(policy)
            worst = max(worst, float(np.max(np.abs(total))))
        return worst <= 1e-12, worst, ""

    @staticmethod
    def check_tabular_score_fd(rng: np.random.Generator) -> Outcome:
        h = 1e-5
        worst = 0.0
        for k in (3, 7):
            z = rng.normal(size=k)
            policy = PolicyTable.from_logits(z)
            for a in range(k):
                fd = np.array([
                    (TabularService.log_prob(z + h * e, a) - TabularService.log_prob(z - h * e, a)) / (2 * h)
                    for e in np.eye(k)
                ])
                worst = max(worst, float(np.max(np.abs(fd - TabularService.score(policy, a)))))
        return worst <= 1e-5, worst, ""

    @staticmethod
    def _specs() -> List[SymmetricBanditSpec]:
        return [
            SymmetricBanditSpec(num_actions=k, error=eps, baseline=b, eta=eta)
            for k in (3, 10, 100)
            for eps in (0.1, 0.4, 0.9)
            for b in (0.1, 0.5, 0.9)
            for eta in (0.5, 1.0, 3.0)
        ]

    @staticmethod
    def check_collinearity(rng: np.random.Generator) -> Outcome:
        worst = 0.0
        for spec in VerificationService._specs():
            dg = TabularService.expected_gradient(spec, EstimatorKind.dg(spec.eta))
            pg = TabularService.expected_gradient(spec, EstimatorKind.pg())
            s = TabularService.gate_values(spec).s
            worst = max(worst, 1.0 - cosine_or_zero(dg, pg), float(np.max(np.abs(dg - s * pg))))
        return worst <= 1e-10, worst, ""

    @staticmethod
    def check_pg_baseline_independence(rng: np.random.Generator) -> Outcome:
        worst = 0.0
        for k in (3, 10, 100):
            for eps in (0.1, 0.3, 0.7):
                means = [
                    TabularService.expected_gradient(
                        SymmetricBanditSpec(num_actions=k, error=eps, baseline=b), EstimatorKind.pg()
                    )
                    for b in (0.1, 0.5, 0.9)
                ]
                closed = (1.0 - eps) * TabularService.score(PolicyTable.symmetric(k, eps), 0)
                worst = max(worst, *(float(np.max(np.abs(m - closed))) for m in means))
        return worst <= 1e-12, worst, ""

    @staticmethod
    def check_variance_ratio(rng: np.random.Generator) -> Outcome:
        worst = 0.0
        for spec in VerificationService._specs():
            ratio = (
                TabularService.perp_variance(spec, EstimatorKind.dg(spec.eta)).perp_variance
                / TabularService.perp_variance(spec, EstimatorKind.pg()).perp_variance
            )
            worst = max(worst, abs(ratio - TabularService.gate_values(spec).w_minus ** 2))
        return worst <= 1e-10, worst, ""

    @staticmethod
    def check_gap_ratio_numbers(rng: np.random.Generator) -> Outcome:
        worst = 0.0
        details = []
        passed = True
        for eps, percent, expected in GAP_CASES:
            ratio = TabularService.gap_ratio(SymmetricBanditSpec(num_actions=100, error=eps, baseline=0.5, eta=1.0))
            details.append(f"eps={eps}:{100 * ratio:.2f}%")
            worst = max(worst, abs(ratio - expected))
            passed = passed and round(100 * ratio) == percent and abs(ratio - expected) <= 5e-3
        return passed, worst, " ".join(details)

    @staticmethod
    def check_gap_ratio_bound(rng: np.random.Generator) -> Outcome:
        worst = -math.inf
        for k in (3, 10, 100, 1000):
            for eps in (0.01, 0.1, 0.5, 0.9):
                spec = SymmetricBanditSpec(num_actions=k, error=eps, baseline=0.5, eta=1.0)
                w_minus = TabularService.gate_values(spec).w_minus
                worst = max(
                    worst,
                    w_minus - math.sqrt(eps / (k - 1)),
                    TabularService.gap_ratio(spec) - 16 * eps / (k - 1),
                )
        return worst <= 0.0, max(worst, 0.0), ""

    @staticmethod
    def check_empirical_gap_ratio(rng: np.random.Generator) -> Outcome:
        spec = SymmetricBanditSpec(num_actions=100, error=0.5, baseline=0.5, eta=1.0)
        reports = [TabularService.empirical_gap_ratio(spec, b, 200, rng) for b in (10, 100, 1000)]
        final = reports[-1]
        error = abs(final.ratio - final.predicted) / final.predicted if final.ratio is not None else math.inf
        detail = " ".join(f"B={r.batch}:{r.ratio:.4f}" for r in reports if r.ratio is not None)
        return error <= 0.2, error, f"{detail} predicted={final.predicted:.4f}"

    @staticmethod
    def check_tail_bounds(rng: np.random.Generator) -> Outcome:
        worst = 0.0
        passed = True
        for i in range(1000):
            k = (3, 10, 50)[i % 3]
            policy = PolicyTable.from_probs(rng.dirichlet(np.ones(k)))
            report = TabularService.nonsymmetric_tail_bound_check(
                policy, int(rng.integers(k)), float(rng.uniform(0.0, 0.99)), float(rng.choice([0.5, 1.0, 2.0]))
            )
            passed = passed and report.holds
            worst = max(worst, report.max_gate_excess, report.perp_variance - report.variance_bound)
        return passed, max(worst, 0.0), ""

    @staticmethod
    def check_progress_bound(rng: np.random.Generator) -> Outcome:
        worst = 0.0
        passed = True
        for z in (-2.0, 0.0, 0.5, 3.0):
            for noise in (0.0, 0.5, 2.0):
                report = TabularService.progress_bound_check(z, 0.1, noise)
                passed = passed and report.holds
                worst = max(worst, report.lower_bound - report.expected_improvement)
        return passed, max(worst, 0.0), ""

    # Multi-context

    @staticmethod
    def check_h_closed_form(rng: np.random.Generator) -> Outcome:
        p = np.linspace(1e-4, 1 - 1e-4, 10_000)
        worst = float(np.max(np.abs(MultiContextService.h(p, 1.0) * (1 + p) - p)))
        return worst <= 1e-12, worst, ""

    @staticmethod
    def check_ratio_compression(rng: np.random.Generator) -> Outcome:
        worst = 0.0
        passed = True
        for _ in range(1000):
            p2, p1 = np.sort(rng.uniform(0.01, 0.99, size=2))
            eta = float(rng.uniform(0.51, 5.0))
            ratio = MultiContextService.h(p1, eta) / MultiContextService.h(p2, eta)
            ok = 1.0 < ratio < p1 / p2 or p1 == p2
            passed = passed and ok
            if not ok:
                worst = max(worst, max(1.0 - ratio, ratio - p1 / p2))
        return passed, worst, ""

    @staticmethod
    def check_greedy_direction(rng: np.random.Generator) -> Outcome:
        worst = 0.0
        cases = [(np.array([0.9, 0.5]), np.ones(2))]
        cases += [MultiContextService.random_instance(rng, n) for n in (2, 2, 5, 8)]
        for p, a in cases:
            for objective in GreedyObjective:
                worst = max(worst, MultiContextService.greedy_direction_check(p, a, objective).angle)
        return worst <= 1e-3, worst, ""

    @staticmethod
    def check_two_vector_cosine(rng: np.random.Generator) -> Outcome:
        r = np.linspace(0.01, 10.0, 9_991)
        worst = 0.0
        for _ in range(20):
            a1, a2 = rng.uniform(0.1, 5.0, size=2)
            values = np.array([MultiContextService.two_vector_cosine(x, a1, a2) for x in r])
            worst = max(worst, abs(r[int(np.argmax(values))] - 1.0))
        return worst <= 1e-3, worst, ""

    @staticmethod
    def check_direction_cosines(rng: np.random.Generator) -> Outcome:
        worst = 0.0
        passed = True
        for eta in DIRECTION_ETAS:
            for _ in range(1000):
                p1, p2 = rng.uniform(0.01, 0.99, size=2)
                result = MultiContextService.direction_cosines(p1, p2, eta, rng.uniform(0.1, 3.0, size=2))
                passed = passed and result.holds
                worst = max(worst, result.cos_pg - result.cos_dg)
        return passed, max(worst, 0.0), ""

    @staticmethod
    def check_path_monotonicity(rng: np.random.Generator) -> Outcome:
        passed = True
        worst = 0.0
        for i in range(100):
            p, a = MultiContextService.random_instance(rng, 10)
            report = MultiContextService.path_monotonicity_check(p, a, DIRECTION_ETAS[i % 3], grid=200)
            passed = passed and report.holds
            worst = max(worst, -report.min_increment, report.max_identity_error)
        return passed, max(worst, 0.0), ""

    @staticmethod
    def check_h_monotonicity(rng: np.random.Generator) -> Outcome:
        reports = [MultiContextService.h_monotonicity(eta) for eta in (0.6, 1.0, 2.0, 5.0)]
        failing = MultiContextService.h_monotonicity(0.4)
        passed = all(r.increasing for r in reports) and not failing.increasing and failing.first_violation > 0.8
        detail = f"eta=0.4 first violation p={failing.first_violation}"
        return passed, 0.0 if passed else 1.0, detail

    # Neural

    @staticmethod
    def _small_mlp(rng: np.random.Generator) -> Tuple[MlpPolicy, np.ndarray]:
        policy = MlpPolicy.initialize(5, 4, 3, rng)
        policy.b1 = rng.normal(scale=0.5, size=4)
        policy.b2 = rng.normal(scale=0.5, size=3)
        return policy, rng.normal(size=(8, 5))

    @staticmethod
    def check_mlp_score_identity(rng: np.random.Generator) -> Outcome:
        policy, x = VerificationService._small_mlp(rng)
        worst = 0.0
        for row in x:
            probs, _ = NeuralService.forward(policy, row)
            total = sum(p * NeuralService.score_grad(policy, row, a).flat() for a, p in enumerate(probs))
            worst = max(worst, float(np.max(np.abs(total))))
        return worst <= 1e-8, worst, ""

    @staticmethod
    def check_mlp_score_fd(rng: np.random.Generator) -> Outcome:
        policy, x = VerificationService._small_mlp(rng)
        theta = policy.flat()
        h = 1e-4
        worst = 0.0
        for _ in range(100):
            row = x[int(rng.integers(len(x)))]
            action = int(rng.integers(3))
            j = int(rng.integers(theta.size))
            analytic = NeuralService.score_grad(policy, row, action).flat()[j]
            bump = np.zeros_like(theta)
            bump[j] = h
            fd = (
                NeuralService.log_prob(policy.with_flat(theta + bump), row, action)
                - NeuralService.log_prob(policy.with_flat(theta - bump), row, action)
            ) / (2 * h)
            worst = max(worst, float(_relative(np.array(fd), np.array(analytic))))
        return worst < 1e-4, worst, ""

    @staticmethod
    def check_mlp_batch_gradient(rng: np.random.Generator) -> Outcome:
        """Accumulated PG gradient with the oracle baseline against the surrogate's finite differences."""
        policy, x = VerificationService._small_mlp(rng)
        labels = rng.integers(3, size=8)
        seed = int(rng.integers(2**31))
        out = NeuralService.forward_batch(policy, x)
        dlogits = NeuralService.estimator_dlogits(
            out, labels, EstimatorKind.pg(), BaselineKind.ORACLE, 2, GateParams(), np.random.default_rng(seed)
        )
        analytic = NeuralService.weighted_backward(policy, out, dlogits).flat()
        actions = NeuralService.sample_actions(out.probs, 2, np.random.default_rng(seed))
        rows = np.arange(8)
        coeffs = (actions == labels[:, None]) - out.probs[rows, labels][:, None]

        def surrogate(theta: np.ndarray) -> float:
            logp = NeuralService.forward_batch(policy.with_flat(theta), x).log_probs
            return float(np.sum(coeffs * logp[rows[:, None], actions]) / actions.size)

        theta = policy.flat()
        h = 1e-5
        fd = np.array([
            (surrogate(theta + h * e) - surrogate(theta - h * e)) / (2 * h)
            for e in np.eye(theta.size)
        ])
        scale = max(float(np.max(np.abs(analytic))), 1e-8)
        worst = float(np.max(np.abs(fd - analytic)) / scale)
        return worst <= 1e-3, worst, ""

    @staticmethod
    def check_logit_bias_score(rng: np.random.Generator) -> Outcome:
        policy, x = VerificationService._small_mlp(rng)
        probs, _ = NeuralService.forward(policy, x[0])
        worst = max(
            float(np.max(np.abs(NeuralService.score_grad(policy, x[0], a).b2 - (np.eye(3)[a] - probs))))
            for a in range(3)
        )
        return worst <= 1e-12, worst, ""

    # Continuous

    @staticmethod
    def check_continuous_update(rng: np.random.Generator) -> Outcome:
        policy = GaussianPolicy(mean=rng.normal(size=3), log_std=rng.uniform(-0.5, 0.5, size=3))
        params = GateParams(eta=0.7, logdensity_clip=4.0)
        actions = ContinuousService.sample(policy, 64, rng)
        advantages = rng.normal(size=64)
        moved = ContinuousService.gated_update(policy, actions, advantages, params, 0.1)

        z = (actions - policy.mean) / policy.std
        log_density = norm.logpdf(z).sum(axis=1) - policy.log_std.sum()
        coeffs = expit(advantages * np.clip(-log_density, -4.0, 4.0) / 0.7) * advantages
        want_mean = policy.mean + 0.1 * coeffs @ (z / policy.std) / 64
        want_log_std = policy.log_std + 0.1 * coeffs @ (z ** 2 - 1.0) / 64
        still = ContinuousService.gated_update(policy, actions, np.zeros(64), params, 0.1)
        worst = float(max(
            np.max(np.abs(moved.mean - want_mean)),
            np.max(np.abs(moved.log_std - want_log_std)),
            np.max(np.abs(still.mean - policy.mean)),
            np.max(np.abs(still.log_std - policy.log_std)),
        ))
        return worst <= 1e-10, worst, ""

    CHECKS: List[Tuple[str, str]] = [
        ("gate.antisymmetry", "check_gate_antisymmetry"),
        ("gate.temperature_limits", "check_temperature_limits"),
        ("gate.potential_derivative", "check_potential_derivative"),
        ("gate.optimality", "check_gate_optimality"),
        ("gate.examples", "check_gate_examples"),
        ("gate.variant_closure", "check_variant_closure"),
        ("tabular.symmetry_identity", "check_symmetry_identity"),
        ("tabular.score_identity", "check_score_identity"),
        ("tabular.score_finite_difference", "check_tabular_score_fd"),
        ("tabular.collinearity", "check_collinearity"),
        ("tabular.pg_baseline_independence", "check_pg_baseline_independence"),
        ("tabular.variance_ratio", "check_variance_ratio"),
        ("tabular.gap_ratio_numbers", "check_gap_ratio_numbers"),
        ("tabular.gap_ratio_bound", "check_gap_ratio_bound"),
        ("tabular.empirical_gap_ratio", "check_empirical_gap_ratio"),
        ("tabular.tail_bounds", "check_tail_bounds"),
        ("tabular.progress_bound", "check_progress_bound"),
        ("multictx.h_closed_form", "check_h_closed_form"),
        ("multictx.ratio_compression", "check_ratio_compression"),
        ("multictx.greedy_direction", "check_greedy_direction"),
        ("multictx.two_vector_cosine", "check_two_vector_cosine"),
        ("multictx.direction_cosines", "check_direction_cosines"),
        ("multictx.path_monotonicity", "check_path_monotonicity"),
        ("multictx.h_monotonicity", "check_h_monotonicity"),
        ("neural.score_identity", "check_mlp_score_identity"),
        ("neural.score_finite_difference", "check_mlp_score_fd"),
        ("neural.batch_gradient", "check_mlp_batch_gradient"),
        ("neural.logit_bias_score", "check_logit_bias_score"),
        ("continuous.gated_update", "check_continuous_update"),
    ]

    @staticmethod
    def run_check(name: str, check: Callable[[np.random.Generator], Outcome], rng: np.random.Generator) -> CheckResult:
        try:
            passed, violation, detail = check(rng)
        except (DelightError, ValidationError, ArithmeticError, ValueError) as exc:
            passed, violation, detail = False, math.inf, f"{type(exc).__name__}: {exc}"
        result = CheckResult(name=name, passed=bool(passed), max_violation=float(violation), detail=detail)
        CHECKS_TOTAL.labels(outcome="pass" if result.passed else "fail").inc()
        logger.info("verify.check", check=name, passed=result.passed, violation=result.max_violation)
        return result

    @staticmethod
    def cmd_verify(seed: Optional[int] = None, fault: Optional[FaultMode] = None) -> VerificationReport:
        """Run the full property suite; each check draws from its own seeded stream."""
        seed = settings.VERIFY_SEED if seed is None else seed
        report = VerificationReport(seed=seed)
        gates = gates_for(fault)
        if fault is not None:
            logger.warning("verify.fault_injected", fault=fault.value)
        for index, (name, method) in enumerate(VerificationService.CHECKS):
            check = getattr(VerificationService, method)
            if name.startswith("gate."):
                check = partial(check, gates=gates)
            report.checks.append(VerificationService.run_check(name, check, derive_rng(seed, index)))
        logger.info("verify.finished", passed=report.passed, failures=len(report.failures))
        return report
