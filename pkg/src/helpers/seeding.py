"""Seed derivation for reproducible runs.

All streams are ``numpy.random.Generator`` instances. Child seeds come from a master seed by
a fixed counter-based split (``SeedSequence`` spawn keys), so a run's seed depends only on the
master seed and its coordinates, never on how many other runs happened before it.
"""

from typing import Optional, Union

import numpy as np

SeedLike = Union[int, np.random.Generator, None]

# spawn-key namespaces
SOLVE_STREAM = 0
SIMULATION_STREAM = 1
INIT_STREAM = 2


def derive_seed(master_seed: int, *coordinates: int) -> int:
    """Return a 32-bit seed determined by ``master_seed`` and ``coordinates``."""
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(coordinates))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def make_rng(seed: SeedLike = None) -> np.random.Generator:
    """Build a Generator from an int seed; Generators pass through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def run_seed(master_seed: int, m: int, arm_index: int, run: int) -> int:
    """Seed for one solver run of arm ``arm_index`` on instance ``m``."""
    return derive_seed(master_seed, SOLVE_STREAM, m, arm_index, run)


def simulation_seed(master_seed: int, m: int) -> int:
    """Seed for the simulation step that turns instance ``m`` into ``m + 1``."""
    return derive_seed(master_seed, SIMULATION_STREAM, m)


def init_rng(seed: Optional[int]) -> np.random.Generator:
    """Stream for building initial solutions, kept apart from the solver's own stream."""
    return make_rng(None if seed is None else derive_seed(seed, INIT_STREAM))
