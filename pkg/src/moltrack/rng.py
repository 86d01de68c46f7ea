"""Reproducible random streams.

Every random draw comes from a Philox generator keyed by
``(seed, purpose, index)``. Replication ``i`` therefore sees the same numbers
whichever thread runs it, and the event and tracking draws of one run never
share a stream.
"""
from __future__ import annotations

import numpy as np

__all__ = ["EVENTS", "TRACKING", "SINGLE", "INITIAL", "POISSON", "REPLICATE", "stream", "child_seed", "check_seed"]

EVENTS = 0
TRACKING = 1
SINGLE = 2
INITIAL = 3
POISSON = 4
REPLICATE = 5


def check_seed(seed) -> int:
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be a non-negative integer, got {seed!r}")
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return int(seed)


def stream(seed: int, index: int = 0, purpose: int = EVENTS) -> np.random.Generator:
    """Independent generator for replication ``index`` and the given purpose."""
    seq = np.random.SeedSequence([check_seed(seed), int(purpose), int(index)])
    return np.random.Generator(np.random.Philox(seq))


def child_seed(seed: int, index: int) -> int:
    """Master seed for replication ``index`` of an experiment that takes one seed per run."""
    seq = np.random.SeedSequence([check_seed(seed), REPLICATE, int(index)])
    return int(seq.generate_state(1, np.uint32)[0])
