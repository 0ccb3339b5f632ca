"""
Seed derivation helpers.

Every random stream in the toolkit is keyed by a tuple of non-negative
integers (global seed, sample id, stage, block ...) so results never depend
on the order in which workers pick up work.
"""
import numpy as np


def derive_seed(*keys):
    """
    Derive a 64-bit seed from a tuple of non-negative integer keys.

    Args:
        *keys: Integers identifying the stream, most significant first.

    Returns:
        int: Seed usable with numpy.random.default_rng.
    """
    entropy = [int(k) for k in keys]
    if any(k < 0 for k in entropy):
        raise ValueError(f"seed keys must be non-negative, got {entropy}")
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def make_rng(*keys):
    """Generator for the stream identified by keys."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))
