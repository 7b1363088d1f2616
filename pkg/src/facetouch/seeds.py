"""Deterministic seed derivation shared across the package.

Every stochastic component derives child seeds through SeedSequence so that
one integer seed pins down the whole pipeline, independent of call order.
"""

from __future__ import annotations

import numpy as np


def derive_seed(seed: int, *key: int) -> int:
    """Stable child seed for (seed, *key). Same inputs, same output, any platform."""
    return int(np.random.SeedSequence((seed, *key)).generate_state(1)[0])


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *key))))
