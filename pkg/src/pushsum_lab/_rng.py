"""Counter-style keyed random streams.

Every random draw in the simulator comes from a generator seeded by a tuple
of integers (run seed, stream id, round, node, ...), so a value never depends
on how many draws happened before it.
"""

import numpy as np

STREAM_TOPOLOGY = 1
STREAM_NOISE = 2
STREAM_INIT = 3
STREAM_DATA = 4


def keyed_rng(seed, *words):
    """Return a fresh generator keyed by ``(seed, *words)``."""
    return np.random.default_rng([int(seed), *(int(w) for w in words)])
