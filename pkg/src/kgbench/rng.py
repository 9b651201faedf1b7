"""Named, reproducible random streams.

Every stochastic step asks for a generator derived from the run seed
plus a tuple of labels, so streams stay independent of each other and
of how work is scheduled.
"""

import zlib

import numpy as np


def stream(seed: int, *labels) -> np.random.Generator:
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    words += [zlib.crc32(str(label).encode("utf-8")) for label in labels]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
