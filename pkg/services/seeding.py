"""
Seed derivation for reproducible runs.

Every random stream is keyed by a path of integers below the master seed,
mixed through numpy's SeedSequence, so results never depend on the order
in which streams are consumed.
"""
import numpy as np

POPULATION_STREAM = 0
ORDER_STATS_STREAM = 1
REPLICATION_STREAM = 2


def derive_seed(master_seed: int, *path: int) -> int:
    """Returns a 64-bit seed for the stream at `path` below `master_seed`."""
    state = np.random.SeedSequence([master_seed, *path]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def make_rng(seed: int | np.random.Generator) -> np.random.Generator:
    """PCG64 generator for an integer seed; generators pass through untouched."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
