"""Counter-based seeding.

Every random stream in the package is addressed by ``(seed, *key)`` so that a
given unit of work (one split, one bag, one sampler read) draws the same numbers
no matter which other units ran before it or on which thread.
"""
import numpy as np

# stream tags, first element of every key
SPLIT = 1
BAG = 2
FOLD = 3
CALIBRATION_SOLVE = 4
TRAINING_SOLVE = 5

_MASK64 = (1 << 64) - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def seed_sequence(seed, *key):
    return np.random.SeedSequence(entropy=check_seed(seed), spawn_key=tuple(int(k) for k in key))


def substream(seed, *key):
    """Return a ``numpy.random.Generator`` for the stream ``(seed, *key)``."""
    return np.random.default_rng(seed_sequence(seed, *key))


def derive_seed(seed, *key):
    """A 64-bit child seed for ``(seed, *key)``."""
    return int(seed_sequence(seed, *key).generate_state(1, np.uint64)[0])


def read_seeds(seed, reads):
    """One 32-bit seed per sampler read, read ``r`` depending only on ``(seed, r)``."""
    return np.array(
        [seed_sequence(seed, r).generate_state(1, np.uint32)[0] for r in range(reads)],
        dtype=np.uint32,
    )
