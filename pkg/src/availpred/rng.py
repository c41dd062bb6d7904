"""Named, reproducible random substreams.

All randomness in the package flows from one root seed through named
substreams, so adding a consumer (an extra user, an extra repetition)
never perturbs the draws of existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_word(key) -> int:
    """Map a stream key to a stable 32-bit word."""
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def substream(seed: int, *keys) -> np.random.Generator:
    """Generator for the substream named by ``keys`` under ``seed``.

    Keys may be strings ("dht", "rep") or non-negative integers (user
    index, repetition number). The same (seed, keys) always yields the
    same stream; different keys yield independent streams.
    """
    spawn_key = tuple(_key_word(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


def derive_seed(seed: int, *keys) -> int:
    """A plain integer seed for the named substream, for APIs taking seeds."""
    spawn_key = tuple(_key_word(k) for k in keys)
    state = np.random.SeedSequence(int(seed), spawn_key=spawn_key).generate_state(1, np.uint64)
    return int(state[0])
