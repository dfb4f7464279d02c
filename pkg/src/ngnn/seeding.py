"""Named random streams derived from one top-level seed.

Stream ``name`` for seed ``s`` is ``PCG64(SeedSequence([s, STREAMS[name]]))``.
Ids are fixed forever; add new names at the end.
"""

import numpy as np

STREAMS = {
    "init": 0,
    "negatives": 1,
    "shuffle": 2,
    "valid": 3,
    "fitb": 4,
    "auc": 5,
    "synthetic": 6,
    "bench": 7,
}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), STREAMS[name]])))
