"""Named, keyed random substreams derived from a single root seed."""

import numpy as np

STREAMS = {
    "initial": 1,
    "sampling": 2,
    "noise": 3,
    "assemble": 4,
    "generation": 5,
    "baseline": 6,
    "init": 7,
    "decode": 8,
}


class RandomStreams:
    """Derives independent generators from (seed, stream, *key).

    The same (stream, key) always yields the same sequence, so results do not
    depend on the order in which workers request their streams.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)

    def _sequence(self, stream: str, key: tuple[int, ...]) -> np.random.SeedSequence:
        if stream not in STREAMS:
            raise KeyError(f"unknown random stream '{stream}'")
        return np.random.SeedSequence([self.seed, STREAMS[stream], *(int(k) for k in key)])

    def generator(self, stream: str, *key: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self._sequence(stream, key)))

    def seed_int(self, stream: str, *key: int) -> int:
        """A 32-bit integer seed for libraries that take plain ints (torch, networkx)."""
        return int(self._sequence(stream, key).generate_state(1)[0])

    def __repr__(self):
        return f"RandomStreams(seed={self.seed})"
