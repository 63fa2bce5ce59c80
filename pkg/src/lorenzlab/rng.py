"""Counter-based random streams.

Every stochastic routine in the library draws from a stream keyed by
``(seed, stream_id)``.  Streams are independent Philox generators, so results
do not depend on evaluation order or on how work is split across workers:
stream ``(seed, k)`` always yields the same numbers.
"""

import numpy as np

__all__ = ["stream", "substreams"]


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Return the generator for counter-based stream (seed, stream_id)."""
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be nonnegative")
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream_id], dtype=np.uint64)))


def substreams(seed: int, n: int, base: int = 0):
    """Yield n independent generators, streams base..base+n-1."""
    for k in range(n):
        yield stream(seed, base + k)
