"""Reproducible random streams.

Every random draw in the package goes through :func:`stream`, which builds a
Philox (counter-based, 64-bit) generator keyed by a master seed and a run
index, so independent runs can execute in any order or in parallel and still
produce the same numbers.
"""

import numpy as np


def stream(seed: int, run: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(run),))
    return np.random.Generator(np.random.Philox(seq))
