"""
Multi-context service: exact population directions over N independent contexts.
"""
import time
from functools import partial
from typing import List, Sequence, Union

import numpy as np
from scipy.optimize import minimize

from app.core.exceptions import DomainError
from app.core.logging import get_logger
from app.core.parallel import fan_out
from app.core.rng import derive_rng
from app.core.validators import CountValidator, PositiveValidator, ProbabilityValidator
from app.models.ensemble import ContextEnsemble, DirectionSet
from app.models.estimator import EstimatorTag, GreedyObjective, OracleArm
from app.models.sample import SeedTrace
from app.schemas.gate import EstimatorKind
from app.schemas.multictx import GreedyReport, HMonotonicityReport, PathReport, DirectionCosines
from app.services.gate_service import GateService
from app.services.tabular_service import cosine_or_zero

logger = get_logger(__name__)

MIN_PROVEN_ETA = 0.5
GREEDY_GRID = 200_001


def _angle(a: np.ndarray, b: np.ndarray) -> float:
    cos = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def _check_open_unit(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("probabilities must lie in (0, 1)")
    return p


def _check_positive(values: np.ndarray, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise DomainError(f"{name} must be positive")
    return values


class MultiContextService:
    """Multi-context service class."""

    @staticmethod
    def h(p, eta: float):
        """DG weight p * sigmoid(-log p / eta)."""
        p = np.asarray(p, dtype=float)
        return p * GateService.sigmoid(-np.log(p) / eta) if p.ndim else float(
            p * GateService.sigmoid(-float(np.log(p)) / eta)
        )

    @staticmethod
    def direction_set(ensemble: ContextEnsemble, eta: float) -> DirectionSet:
        """CE, PG and DG population directions at baseline 0."""
        PositiveValidator.validate_positive(eta, "eta")
        v = ensemble.score_vectors()
        p = ensemble.correct_probs
        h = MultiContextService.h(p, eta)
        return DirectionSet(
            ce=v,
            pg=p[:, None] * v,
            dg=h[:, None] * v,
            weights=np.column_stack([np.ones_like(p), p, h]),
        )

    @staticmethod
    def cosine(a: np.ndarray, b: np.ndarray) -> float:
        """Frobenius cosine of two same-shape arrays."""
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        if a.shape != b.shape:
            raise DomainError(f"shape mismatch {a.shape} vs {b.shape}")
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            raise DomainError("cosine of a zero-norm input")
        return float(np.clip(np.sum(a * b) / (na * nb), -1.0, 1.0))

    @staticmethod
    def weighted_cosine(weights_a: np.ndarray, weights_b: np.ndarray, norms_sq: np.ndarray) -> float:
        """cos(sum a_n v_n, sum b_n v_n) for orthogonal v_n with ||v_n||^2 = norms_sq."""
        wa, wb, a = (np.asarray(x, dtype=float) for x in (weights_a, weights_b, norms_sq))
        return float(np.sum(wa * wb * a) / np.sqrt(np.sum(wa ** 2 * a) * np.sum(wb ** 2 * a)))

    @staticmethod
    def two_vector_cosine(r: float, a1: float, a2: float) -> float:
        """C(r) = (r a1 + a2) / sqrt((r^2 a1 + a2)(a1 + a2))."""
        return float((r * a1 + a2) / np.sqrt((r ** 2 * a1 + a2) * (a1 + a2)))

    @staticmethod
    def greedy_direction_check(
        p: Sequence[float],
        norms_sq: Sequence[float],
        objective: GreedyObjective,
        step: float = 1.0,
    ) -> GreedyReport:
        """Maximize the first-order gain over unit-norm updates sum c_n v_n.

        With x_n = c_n sqrt(a_n) the constraint is ||x|| = 1 and the gain is
        step * <x, y> with y_n = p_n sqrt(a_n) (sum_p) or sqrt(a_n) (sum_log_p).
        """
        p = _check_open_unit(p)
        a = _check_positive(norms_sq, "norms_sq")
        if p.shape[0] < 2 or a.shape != p.shape:
            raise DomainError("need N >= 2 contexts with one norm each")
        objective = GreedyObjective(objective)
        weight = p if objective is GreedyObjective.SUM_P else np.ones_like(p)
        y = weight * np.sqrt(a)

        if p.shape[0] == 2:
            theta = np.linspace(0.0, np.pi / 2, GREEDY_GRID)
            x_grid = np.column_stack([np.cos(theta), np.sin(theta)])
            x = x_grid[int(np.argmax(x_grid @ y))]
        else:
            result = minimize(
                lambda u: -np.dot(y, u) / np.linalg.norm(u),
                x0=np.ones_like(y),
                method="BFGS",
                options={"gtol": 1e-12},
            )
            x = result.x / np.linalg.norm(result.x)
        c = x / np.sqrt(a)
        return GreedyReport(
            objective=objective,
            argmax=(c / np.linalg.norm(c)).tolist(),
            predicted=(weight / np.linalg.norm(weight)).tolist(),
            angle=_angle(c, weight),
            improvement=float(step * np.dot(x, y)),
        )

    @staticmethod
    def direction_cosines(p1: float, p2: float, eta: float, norms: Sequence[float] = (1.0, 1.0)) -> DirectionCosines:
        """Cosines to the CE direction of the DG and PG directions for two contexts."""
        p1 = ProbabilityValidator.validate_open_unit(p1, "p1")
        p2 = ProbabilityValidator.validate_open_unit(p2, "p2")
        if eta <= MIN_PROVEN_ETA:
            raise DomainError(f"eta must exceed {MIN_PROVEN_ETA}, got {eta}")
        if p1 == p2:
            raise DomainError("p1 and p2 must differ")
        a = _check_positive(np.asarray(norms, dtype=float) ** 2, "norms")
        p = np.array([p1, p2])
        h = MultiContextService.h(p, eta)
        ones = np.ones(2)
        hi, lo = (0, 1) if p1 > p2 else (1, 0)
        return DirectionCosines(
            cos_dg=MultiContextService.weighted_cosine(h, ones, a),
            cos_pg=MultiContextService.weighted_cosine(p, ones, a),
            ratio_dg=float(h[hi] / h[lo]),
            ratio_pg=float(p[hi] / p[lo]),
        )

    @staticmethod
    def path_phi(t: np.ndarray, p: np.ndarray, norms_sq: np.ndarray, eta: float) -> np.ndarray:
        """Phi(t) = (sum c a)^2 / sum c^2 a with c_n(t) = p_n sigmoid(-log p_n / eta)^t."""
        lam = np.log(GateService.sigmoid(-np.log(p) / eta))
        c = p[None, :] * np.exp(np.outer(np.atleast_1d(t), lam))
        return np.sum(c * norms_sq, axis=1) ** 2 / np.sum(c ** 2 * norms_sq, axis=1)

    @staticmethod
    def path_derivative(t: float, p: np.ndarray, norms_sq: np.ndarray, eta: float, symmetrized: bool = True) -> float:
        """Phi'(t) from the pairwise sum (symmetrized) or the full double sum."""
        lam = np.log(GateService.sigmoid(-np.log(p) / eta))
        c = p * np.exp(t * lam)
        a = norms_sq
        big_a, big_b = np.sum(c * a), np.sum(c ** 2 * a)
        dl = lam[:, None] - lam[None, :]
        pair = a[:, None] * a[None, :] * c[:, None] * c[None, :]
        if symmetrized:
            dc = c[None, :] - c[:, None]
            total = np.sum(np.triu(dl * pair * dc, k=1))
        else:
            total = np.sum(dl * pair * c[None, :])
        return float(2.0 * big_a / big_b ** 2 * total)

    @staticmethod
    def path_monotonicity_check(
        p: Sequence[float], norms_sq: Sequence[float], eta: float, grid: int = 1000
    ) -> PathReport:
        """Phi strictly increasing on a t-grid, plus the pairwise sign identity at t in {0, 1/2, 1}."""
        p = _check_open_unit(p)
        a = _check_positive(norms_sq, "norms_sq")
        if eta <= MIN_PROVEN_ETA:
            raise DomainError(f"eta must exceed {MIN_PROVEN_ETA}, got {eta}")
        if grid < 100:
            raise DomainError("grid must be at least 100")
        t = np.linspace(0.0, 1.0, grid)
        phi = MultiContextService.path_phi(t, p, a, eta)
        if np.all(p == p[0]):
            return PathReport(
                degenerate=True,
                monotone=False,
                min_increment=0.0,
                phi_start=float(phi[0]),
                phi_end=float(phi[-1]),
            )
        increments = np.diff(phi)
        identity_error = 0.0
        fd_error = 0.0
        signs_positive = True
        h = 1e-6
        for point in (0.0, 0.5, 1.0):
            pairwise = MultiContextService.path_derivative(point, p, a, eta)
            direct = MultiContextService.path_derivative(point, p, a, eta, symmetrized=False)
            lo, hi = max(point - h, 0.0), min(point + h, 1.0)
            fd = float(np.diff(MultiContextService.path_phi(np.array([lo, hi]), p, a, eta))[0] / (hi - lo))
            scale = max(abs(direct), 1e-12)
            identity_error = max(identity_error, abs(pairwise - direct) / scale)
            fd_error = max(fd_error, abs(fd - direct) / scale)
            signs_positive = signs_positive and pairwise > 0
        return PathReport(
            monotone=bool(np.all(increments > 0)),
            min_increment=float(increments.min()),
            phi_start=float(phi[0]),
            phi_end=float(phi[-1]),
            max_identity_error=float(identity_error),
            max_fd_error=float(fd_error),
            derivative_signs_positive=signs_positive,
        )

    @staticmethod
    def h_monotonicity(eta: float, grid: int = 10_000) -> HMonotonicityReport:
        """First p on an interior grid of (0, 1) where h stops increasing."""
        PositiveValidator.validate_positive(eta, "eta")
        CountValidator.validate_count(grid, "grid", minimum=2)
        p = np.linspace(0.0, 1.0, grid + 2)[1:-1]
        diffs = np.diff(MultiContextService.h(p, eta))
        bad = np.flatnonzero(diffs <= 0)
        return HMonotonicityReport(
            eta=eta,
            increasing=bad.size == 0,
            first_violation=float(p[bad[0]]) if bad.size else None,
            grid=grid,
        )

    @staticmethod
    def descent_direction(directions: DirectionSet, arm: Union[EstimatorKind, OracleArm]) -> np.ndarray:
        if arm is OracleArm.CE:
            return directions.ce
        if isinstance(arm, EstimatorKind) and arm.tag is EstimatorTag.PG:
            return directions.pg
        if isinstance(arm, EstimatorKind) and arm.tag is EstimatorTag.DG:
            return directions.dg
        raise DomainError(f"multi-context descent supports pg, dg and ce, got {arm}")

    @staticmethod
    def run_descent_seed(
        seed_index: int,
        num_contexts: int,
        num_actions: int,
        eta: float,
        step_size: float,
        steps: int,
        arm: Union[EstimatorKind, OracleArm],
        base_seed: int = 0,
    ) -> SeedTrace:
        """One seed's exact-gradient descent with normalized steps on all logits."""
        ensemble = ContextEnsemble.standard_normal(num_contexts, num_actions, derive_rng(base_seed, seed_index))
        if isinstance(arm, EstimatorKind) and arm.eta is not None:
            eta = arm.eta
        trace = SeedTrace(seed=seed_index)
        for step in range(1, steps + 1):
            directions = MultiContextService.direction_set(ensemble, eta)
            g = MultiContextService.descent_direction(directions, arm)
            misalignment = 1.0 - cosine_or_zero(g, directions.ce)
            norm_g = np.linalg.norm(g)
            if step_size > 0 and norm_g > 1e-12:
                ensemble.logits = ensemble.logits + step_size * g / norm_g
            trace.record(
                step,
                mean_error=1.0 - float(np.mean(ensemble.correct_probs)),
                misalignment_ce=max(misalignment, 0.0),
            )
        return trace

    @staticmethod
    def run_multictx_descent(
        num_contexts: int,
        num_actions: int,
        eta: float,
        step_size: float,
        steps: int,
        seeds: int,
        arm: Union[EstimatorKind, OracleArm],
        base_seed: int = 0,
        workers: int = 1,
    ) -> List[SeedTrace]:
        """Traces of (step, mean error, misalignment to CE), one per seed."""
        for value, name in ((num_contexts, "num_contexts"), (num_actions, "num_actions"), (steps, "steps"), (seeds, "seeds")):
            CountValidator.validate_count(value, name)
        PositiveValidator.validate_positive(eta, "eta")
        if step_size < 0:
            raise DomainError("step_size must be >= 0")
        started = time.perf_counter()
        job = partial(
            MultiContextService.run_descent_seed,
            num_contexts=num_contexts,
            num_actions=num_actions,
            eta=eta,
            step_size=step_size,
            steps=steps,
            arm=arm,
            base_seed=base_seed,
        )
        traces = fan_out(job, range(seeds), workers)
        logger.info(
            "multictx.finished",
            arm=getattr(arm, "name", str(arm)),
            seeds=seeds,
            steps=steps,
            elapsed=round(time.perf_counter() - started, 3),
        )
        return traces

    @staticmethod
    def random_instance(rng: np.random.Generator, n: int, low: float = 0.05, high: float = 0.95):
        """Random (p, norms_sq) for randomized checks."""
        p = rng.uniform(low, high, size=n)
        a = rng.uniform(0.1, 2.0, size=n)
        return p, a
