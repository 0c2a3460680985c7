"""Deterministic named random substreams derived from one run seed.

Every source of randomness (weight init, batch shuffling, embedding
fallback vectors) draws from its own named substream so that changing one
component's consumption pattern never perturbs the others.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, name: str) -> int:
    """Stable 63-bit integer seed for the substream `name` under `seed`."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def substream(seed: int, name: str) -> np.random.Generator:
    """A numpy Generator seeded from the named substream."""
    return np.random.default_rng(derive_seed(seed, name))
