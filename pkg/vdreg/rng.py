"""Named, reproducible random streams.

Every source of randomness is a `numpy.random.Generator` derived from the
user seed plus a tuple of stream names, so a chain, a replicate or a
prediction lane can be re-run in isolation and gets the same numbers.
"""
import zlib

import numpy as np


def stream_key(*names):
    key = []
    for name in names:
        if isinstance(name, (int, np.integer)):
            key.append(int(name))
        else:
            key.append(zlib.crc32(str(name).encode('utf-8')))
    return tuple(key)

def stream(seed, *names):
    if seed is None:
        raise ValueError("a seed is required, wall-clock seeding is not supported")
    sequence = np.random.SeedSequence(int(seed), spawn_key=stream_key(*names))
    return np.random.Generator(np.random.PCG64(sequence))

def derive_seed(seed, *names):
    """An integer seed for a named sub-run (a replicate, a method fit) of `seed`."""
    return int(stream(seed, *names).integers(0, 2 ** 63 - 1))
