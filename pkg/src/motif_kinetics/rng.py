"""Seeded random streams.

All randomness goes through NumPy's PCG64 bit generator (PCG-XSL-RR 128/64),
keyed by a ``SeedSequence`` built from the user seed plus a fixed spawn key
``(stream, index)``. Streams are independent of each other and of the order
in which they are created, so parallel work draws the same numbers as a
sequential run.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

KMEANS_STREAM = 1
SYNTH_STREAM = 2


def check_seed(seed) -> int:
    if isinstance(seed, bool) or int(seed) != seed or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def make_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(stream, index))
    return np.random.Generator(np.random.PCG64(ss))
