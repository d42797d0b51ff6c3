"""Counter-based random stream derivation.

Every stochastic consumer gets its own generator keyed by
``(master_seed, *key)``. Streams never depend on how many draws another
consumer made, so serial and parallel execution produce the same numbers.
"""

from __future__ import annotations

import numpy as np

# Purpose codes used as the last element of a stream key.
INIT = 1
INFANCY = 2
EVAL = 3
CONCEPTION = 4
MASK = 5
TRIAL = 6


def seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Return an independent PCG64 generator for ``(master_seed, *key)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, *key)))


def derive_seed(master_seed: int, *key: int) -> int:
    """Derive a 64-bit integer seed, e.g. for a per-trial master seed."""
    state = seed_sequence(master_seed, *key).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
