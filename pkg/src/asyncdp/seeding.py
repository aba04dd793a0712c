"""Deterministic derivation of independent random streams from one master seed.

Every source of randomness in a run (the event schedule, each owner's noise,
per-cell synthetic data, per-run sub-seeds) gets its own substream keyed by a
stream tag plus identifying integers, so runs replay exactly and owners' noise
streams stay statistically independent.
"""

from __future__ import annotations

import numpy as np

OWNER_STREAM = 1
SCHEDULE_STREAM = 2
DATA_STREAM = 3
RUN_STREAM = 4


def _seed_seq(master_seed: int, *key: int) -> np.random.SeedSequence:
    entropy = [int(master_seed), *(int(k) for k in key)]
    if any(part < 0 for part in entropy):
        raise ValueError("seed components must be nonnegative integers")
    return np.random.SeedSequence(entropy)


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream identified by (master_seed, *key)."""
    return np.random.default_rng(_seed_seq(master_seed, *key))


def derive_seed(master_seed: int, *key: int) -> int:
    """Collapse (master_seed, *key) into a single 64-bit child seed."""
    words = _seed_seq(master_seed, *key).generate_state(2)
    return (int(words[0]) << 32) | int(words[1])
