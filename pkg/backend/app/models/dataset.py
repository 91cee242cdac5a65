"""
Classification datasets.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Inputs and labels; rows [0, val_start) train, [val_start, M) validate."""

    inputs: np.ndarray   # M x D
    labels: np.ndarray   # M
    num_classes: int
    val_start: int
    image_shape: Optional[Tuple[int, int]] = None

    @property
    def size(self) -> int:
        return self.labels.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def train_inputs(self) -> np.ndarray:
        return self.inputs[: self.val_start]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[: self.val_start]

    @property
    def val_inputs(self) -> np.ndarray:
        return self.inputs[self.val_start:]

    @property
    def val_labels(self) -> np.ndarray:
        return self.labels[self.val_start:]

    @property
    def has_validation(self) -> bool:
        return self.val_start < self.size

    def __repr__(self) -> str:
        return (
            f"<Dataset(M={self.size}, D={self.input_dim}, K={self.num_classes}, "
            f"train={self.val_start})>"
        )
