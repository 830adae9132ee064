"""Named, independent random streams derived from one integer seed.

Every consumer of randomness asks for a stream by name, so adding a new
consumer never shifts the draws seen by an existing one.
"""

from __future__ import annotations

import zlib

import numpy as np



def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("ascii"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def split(rng, k: int) -> list[np.random.Generator]:
    """Derive ``k`` independent child generators from ``rng``."""
    if isinstance(rng, np.random.Generator):
        return list(rng.spawn(k))
    if isinstance(rng, np.random.SeedSequence):
        return [np.random.default_rng(s) for s in rng.spawn(k)]
    return [np.random.default_rng(s) for s in np.random.SeedSequence(rng).spawn(k)]
