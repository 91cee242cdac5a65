"""
Sampled batches and per-seed traces.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np


@dataclass
class SampleBatch:
    """Vectorized sample terms for B draws from one discrete policy.

    Score vectors are not stored; ``scores`` materializes them on demand
    (B x K), which batch gradients avoid.
    """

    actions: np.ndarray
    advantages: np.ndarray
    surprisals: np.ndarray
    delights: np.ndarray
    gates: np.ndarray

    @property
    def size(self) -> int:
        return self.actions.shape[0]

    @property
    def coeffs(self) -> np.ndarray:
        """omega = w * U per sample."""
        return self.gates * self.advantages

    def scores(self, probs: np.ndarray) -> np.ndarray:
        out = -np.tile(probs, (self.size, 1))
        out[np.arange(self.size), self.actions] += 1.0
        return out

    def terms(self) -> List["SampleTerm"]:
        from app.schemas.gate import SampleTerm

        return [
            SampleTerm(
                action=int(a),
                advantage=float(u),
                surprisal=float(ell),
                delight=float(u) * float(ell),
                gate=float(w),
                effective_coeff=float(w) * float(u),
            )
            for a, u, ell, w in zip(self.actions, self.advantages, self.surprisals, self.gates)
        ]


@dataclass
class SeedTrace:
    """Columns recorded for one seed, one row per recorded step."""

    seed: int
    steps: List[int] = field(default_factory=list)
    columns: Dict[str, List[float]] = field(default_factory=dict)

    def record(self, step: int, **values: float) -> None:
        self.steps.append(step)
        for name, value in values.items():
            self.columns.setdefault(name, []).append(float(value))

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name])

    def final(self, name: str) -> Optional[float]:
        values = self.columns.get(name)
        return values[-1] if values else None

    def rows(self) -> Iterator[Tuple]:
        names = list(self.columns)
        for i, step in enumerate(self.steps):
            yield (self.seed, step, *(self.columns[n][i] for n in names))

    def __len__(self) -> int:
        return len(self.steps)
