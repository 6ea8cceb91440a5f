"""Named random sub-streams derived from a single run seed."""

import numpy as np

STREAMS = {"init": 0, "shuffle": 1, "explore": 2, "synth": 3, "split": 4}


def stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    # SeedSequence entropy must be a non-negative int or sequence thereof
    return np.random.default_rng([int(seed), STREAMS[name], *(int(k) for k in keys)])
