"""Per-trial random streams derived from a master seed.

A trial's streams are keyed by ``(arm, point, trial)``; arms never share keys, so
the null, alternative and calibration arms never reuse a raw variate.
"""
from __future__ import annotations

import numpy as np

ARM_NULL = 0
ARM_ALT = 1
ARM_CALIB = 2
ARM_SIGNS = 3

STREAM_DATA = 0
STREAM_NOISE = 1


def seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    if not 0 <= int(master_seed) < 2 ** 64:
        raise ValueError("master seed must be a 64-bit unsigned integer")
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))


def generator(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, *key)))


def trial_streams(master_seed: int, arm: int, point: int, trial: int):
    """Independent data and noise generators for one trial."""
    return (generator(master_seed, arm, point, trial, STREAM_DATA),
            generator(master_seed, arm, point, trial, STREAM_NOISE))
