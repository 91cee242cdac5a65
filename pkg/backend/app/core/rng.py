"""
Seed derivation.

Every random stream is a Philox generator keyed by the tuple
(base_seed, seed_index[, step]), so a seed's trace does not depend on
how many seeds run or on which worker runs it.
"""
from typing import Optional

import numpy as np


def derive_seed_sequence(base_seed: int, seed_index: int, step: Optional[int] = None) -> np.random.SeedSequence:
    """Seed sequence for one (seed, step) substream."""
    entropy = [int(base_seed), int(seed_index)]
    if step is not None:
        entropy.append(int(step))
    return np.random.SeedSequence(entropy)


def derive_rng(base_seed: int, seed_index: int, step: Optional[int] = None) -> np.random.Generator:
    """Counter-based generator for one (seed, step) substream."""
    return np.random.Generator(np.random.Philox(derive_seed_sequence(base_seed, seed_index, step)))
