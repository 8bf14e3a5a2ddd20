"""Deterministic random-stream derivation.

All randomness in the toolkit flows from one 64-bit master seed through a
counter-keyed derivation tree:

    (master_seed, purpose, *counters) -> independent Philox stream

e.g. the phase screen of realization r at propagation step s uses
``stream(seed, PURPOSE_MEDIUM, r, s)``.  Streams depend only on the key, never
on scheduling, worker count, or call order, so a run is bit-reproducible under
any parallelization and any subset of the work can be regenerated in isolation.
"""

from __future__ import annotations

import numpy as np

# purpose codes (documented part of the derivation tree)
PURPOSE_MEDIUM = 0      # Brownian phase-screen increments
PURPOSE_RETRIEVAL = 1   # phase-retrieval restart initializers
PURPOSE_TEST = 2        # synthetic data in tests/benchmarks

_MASK64 = (1 << 64) - 1


def stream(master_seed: int, purpose: int, *counters: int) -> np.random.Generator:
    """Return the Philox generator keyed by (master_seed, purpose, counters)."""
    if not 0 <= int(master_seed) <= _MASK64:
        raise ValueError("master_seed must fit in 64 bits")
    tail = (int(purpose),) + tuple(int(c) for c in counters)
    if any(c < 0 for c in tail):
        raise ValueError("purpose and counters must be non-negative")
    # SeedSequence zero-pads short entropy, so (s, p, 0) and (s, p, 0, 0)
    # would collide without the explicit length word.
    key = (int(master_seed), len(tail)) + tail
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
