"""One seed, many independent streams.

Every stochastic component draws from its own generator derived from the
global seed and a fixed stream name, so adding draws in one component never
shifts another.
"""
import numpy as np

STREAMS = {"init": 0, "sampler": 1, "mc": 2, "eval": 3, "simulate": 4, "order": 5}


def rng_for(seed, stream, *extra):
    if stream not in STREAMS:
        raise KeyError(f"unknown rng stream {stream!r}")
    key = [int(seed), STREAMS[stream], *[int(e) for e in extra]]
    return np.random.default_rng(np.random.SeedSequence(key))
