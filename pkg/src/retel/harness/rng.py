"""Per-replicate random streams.

Each stream is a Philox generator keyed by ``(seed, cell, rep)``, so a
replicate draws the same numbers no matter which thread runs it or in what
order.
"""

import numpy as np

_MASK = (1 << 64) - 1


def stream(seed: int, cell: int, rep: int, *extra: int) -> np.random.Generator:
    key = [int(seed) & _MASK, int(cell), int(rep), *map(int, extra)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def seed_sequence(seed: int, cell: int, rep: int, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & _MASK, int(cell), int(rep), *map(int, extra)])
