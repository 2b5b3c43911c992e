"""Seeded random streams.

All randomness flows through Philox (a counter-based generator) keyed by
``(seed, stream)``, so any run can be replayed stream by stream and
independent streams can be generated in any order.
"""
import numpy as np


def stream_rng(seed, stream=0):
    """Return a ``numpy.random.Generator`` for substream ``stream`` of ``seed``."""
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative integers")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))
