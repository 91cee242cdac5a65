"""
Gate service: surprisal, delight, sigmoid gate and estimator weighting.
"""
import math
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit

from app.core.exceptions import DomainError
from app.core.validators import FiniteValidator, PositiveValidator
from app.models.estimator import EstimatorTag
from app.schemas.gate import EstimatorKind, GateParams, SampleTerm

PROB_FLOOR = 1e-300
WHITEN_EPS = 1e-8


class GateService:
    """Gate service class."""

    @staticmethod
    def sigmoid(x):
        """Overflow-safe logistic function (scalar or array).

        In float64 the result saturates to exactly 0.0 or 1.0 once |x| exceeds
        about 37 (upper side) or 745 (lower side); use log_gate for diagnostics there.
        """
        return expit(np.asarray(x, dtype=float)) if np.ndim(x) else float(expit(float(x)))

    @staticmethod
    def log_gate(x):
        """log sigmoid(x), finite for every finite x."""
        value = -np.logaddexp(0.0, -np.asarray(x, dtype=float))
        return float(value) if np.ndim(value) == 0 else value

    @staticmethod
    def surprisal(prob: float) -> float:
        """-log(prob) for prob in (0, 1]."""
        prob = FiniteValidator.validate_finite(prob, "prob")
        if prob <= 0.0 or prob > 1.0:
            raise DomainError(f"prob must lie in (0, 1], got {prob}")
        if prob == 1.0:
            return 0.0
        return -math.log(max(prob, PROB_FLOOR))

    @staticmethod
    def surprisals(probs: np.ndarray) -> np.ndarray:
        """Vectorized surprisal, probabilities floored at 1e-300."""
        p = np.asarray(probs, dtype=float)
        if np.any(p <= 0.0) or np.any(p > 1.0):
            raise DomainError("probabilities must lie in (0, 1]")
        out = -np.log(np.maximum(p, PROB_FLOOR))
        out[p == 1.0] = 0.0
        return out

    @classmethod
    def gate(cls, advantage: float, surprisal: float, params: GateParams, action=None) -> SampleTerm:
        """Delight chi = U * l and gate w = sigmoid(chi / eta)."""
        advantage = FiniteValidator.validate_finite(advantage, "advantage")
        surprisal = FiniteValidator.validate_finite(surprisal, "surprisal")
        delight = advantage * surprisal
        w = cls.sigmoid(delight / params.eta)
        return SampleTerm(
            action=action,
            advantage=advantage,
            surprisal=surprisal,
            delight=delight,
            gate=w,
            effective_coeff=w * advantage,
        )

    @staticmethod
    def clip_surprisal(log_density, clip: float):
        """clip(-log density, -C, C)."""
        return np.clip(-np.asarray(log_density, dtype=float), -clip, clip)

    @classmethod
    def gate_continuous(cls, advantage: float, log_density: float, params: GateParams, action=None) -> SampleTerm:
        """Gate on a clipped density-based surprisal; may be negative."""
        log_density = FiniteValidator.validate_finite(log_density, "log_density")
        surprisal = float(cls.clip_surprisal(log_density, params.logdensity_clip))
        return cls.gate(advantage, surprisal, params, action=action)

    @staticmethod
    def effective_coeff(term: SampleTerm) -> float:
        """omega = w * U."""
        return term.gate * term.advantage

    @staticmethod
    def softplus_potential(delight, eta: float):
        """eta * log(1 + exp(chi / eta)), evaluated without overflow."""
        PositiveValidator.validate_positive(eta, "eta")
        value = eta * np.logaddexp(0.0, np.asarray(delight, dtype=float) / eta)
        return float(value) if np.ndim(value) == 0 else value

    @staticmethod
    def logit_objective(z: np.ndarray, delight: float, eta: float) -> np.ndarray:
        """chi * w + eta * H(w) at w = sigmoid(z), with H the binary entropy.

        -log w = softplus(-z) and -log(1 - w) = softplus(z), so both entropy
        terms stay accurate when w or 1 - w is below machine epsilon.
        """
        z = np.asarray(z, dtype=float)
        w, rest = expit(z), expit(-z)
        return delight * w + eta * (w * np.logaddexp(0.0, -z) + rest * np.logaddexp(0.0, z))

    @staticmethod
    def verify_gate_optimality(delight: float, eta: float, grid_size: int = 10_001) -> Tuple[float, float]:
        """Maximize the gate objective over w in (0, 1), searching in logit space.

        A uniform grid over logit(w) in [-L, L] with L = 10 + 2|chi|/eta
        locates the best cell; a bounded scalar search inside its two
        neighbouring cells refines it.
        """
        if grid_size < 1000:
            raise DomainError("grid_size must be at least 1000")
        PositiveValidator.validate_positive(eta, "eta")
        span = 10.0 + 2.0 * abs(delight) / eta
        grid = np.linspace(-span, span, grid_size)
        values = GateService.logit_objective(grid, delight, eta)
        best = int(np.argmax(values))
        lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, grid_size - 1)]
        refined = minimize_scalar(
            lambda z: -GateService.logit_objective(z, delight, eta),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10},
        )
        if -refined.fun >= values[best]:
            return float(expit(refined.x)), float(-refined.fun)
        return float(expit(grid[best])), float(values[best])

    @staticmethod
    def variant_eta(kind: EstimatorKind, params: GateParams) -> float:
        return kind.eta if kind.eta is not None else params.eta

    @staticmethod
    def delight_variant(kind: EstimatorKind, advantage, surprisal):
        """Variant delight; PG and entropy-PG report U * l but are never gated."""
        u = np.asarray(advantage, dtype=float)
        ell = np.asarray(surprisal, dtype=float)
        if kind.tag is EstimatorTag.UCB_ADDITIVE:
            out = (1.0 - kind.alpha) * u + kind.alpha * ell
        elif kind.tag is EstimatorTag.SURPRISAL_EXPONENT:
            if np.any(ell < 0) and float(kind.beta) != int(kind.beta):
                raise DomainError("fractional surprisal exponent needs nonnegative surprisal")
            out = u * np.power(ell, kind.beta)
        else:
            out = u * ell
        return float(out) if np.ndim(out) == 0 else out

    @classmethod
    def gate_batch(
        cls,
        kind: EstimatorKind,
        advantages: np.ndarray,
        surprisals: np.ndarray,
        params: GateParams,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """(delights, gates) for a batch; gates are 1 for ungated variants."""
        delights = np.asarray(cls.delight_variant(kind, advantages, surprisals), dtype=float)
        if not kind.gated:
            return delights, np.ones_like(delights)
        gate_input = delights
        if params.whiten and delights.size > 1:
            gate_input = (delights - delights.mean()) / (delights.std() + WHITEN_EPS)
        return delights, cls.sigmoid(gate_input / cls.variant_eta(kind, params))

    @classmethod
    def coefficient_table(
        cls,
        probs: np.ndarray,
        advantages: np.ndarray,
        eta: float = 1.0,
    ) -> dict:
        """omega = w * U on a (p, U) grid next to PG's omega = U."""
        p = np.asarray(probs, dtype=float)[:, None]
        u = np.asarray(advantages, dtype=float)[None, :]
        ell = cls.surprisals(p)
        dg = cls.sigmoid(u * ell / eta) * u
        return {
            "probs": p[:, 0],
            "advantages": u[0],
            "dg": dg,
            "pg": np.broadcast_to(u, dg.shape).copy(),
        }

    @classmethod
    def term_list(
        cls,
        actions,
        advantages: np.ndarray,
        surprisals: np.ndarray,
        params: GateParams,
        kind: Optional[EstimatorKind] = None,
    ) -> list:
        """Per-sample SampleTerm records for a batch."""
        kind = kind or EstimatorKind.dg()
        terms = []
        for a, u, ell in zip(actions, advantages, surprisals):
            term = cls.gate(float(u), float(ell), params, action=a.item() if hasattr(a, "item") else a)
            if not kind.gated:
                term = term.model_copy(update={"gate": 1.0, "effective_coeff": float(u)})
            terms.append(term)
        return terms
