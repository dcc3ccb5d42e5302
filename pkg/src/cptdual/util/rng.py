"""
Seeded random streams

All randomness in cptdual is derived from a single integer seed.  Each
consumer (an optimizer start, a batch of probe directions, a stress family)
asks for its own named stream so results never depend on scheduling.
"""
import hashlib
from typing import Union

import numpy as np

StreamKey = Union[int, str]


def _key(part: StreamKey) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("Stream keys must be non-negative")
        return int(part)
    return int.from_bytes(hashlib.sha256(str(part).encode("utf-8")).digest()[:4], "little")


def make_rng(seed: int, *stream: StreamKey) -> np.random.Generator:
    """
    Return a counter-based generator for ``seed`` and the named stream.

    Parameters
    ----------
    seed : int
        Run seed (64-bit)
    stream
        Any number of ints/strings naming the consumer, e.g.
        ``make_rng(seed, "optimize", "start", 3)``

    Returns
    -------
    rng : numpy.random.Generator
        Philox generator keyed by ``SeedSequence(seed, spawn_key=stream)``
    """
    if seed is None or int(seed) < 0:
        raise ValueError("Seed must be a non-negative integer")
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(s) for s in stream))
    return np.random.Generator(np.random.Philox(sequence))
