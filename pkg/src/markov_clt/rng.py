"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, *key)`` through a
``SeedSequence`` spawn key, so a replicate's draws depend only on its key
and never on how work is scheduled across threads.
"""

import zlib

import numpy as np

# stream roles
CHAIN = 0
REFERENCE = 1
FLOOR = 2
DIRECTIONS = 3
AUX = 4


def stream(seed, *key):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def experiment_id(name):
    """Stable 32-bit id for a textual experiment label."""
    return zlib.crc32(str(name).encode("utf-8"))


def as_generator(seed):
    """Accept an int seed or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(seed)
