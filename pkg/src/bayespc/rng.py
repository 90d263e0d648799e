"""Named, reproducible random streams.

Every stochastic routine in the package takes a ``numpy.random.Generator``.
Generators are derived from a root seed plus a path of names, e.g.
``stream(7, "table1", "recoverable", 12, "phase2")``, so replicate ``12``
draws the same numbers no matter how many workers run or in which order.
"""
import zlib

import numpy as np


def _key(name):
    if isinstance(name, (int, np.integer)):
        if name < 0:
            raise ValueError("stream names must be non-negative integers or strings")
        return int(name)
    return zlib.crc32(str(name).encode("utf-8"))


def stream(seed, *names):
    """Return a counter-based (Philox) generator for ``seed`` and a name path."""
    if seed is None:
        raise ValueError("an explicit seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.Philox(ss))
