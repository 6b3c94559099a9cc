"""Seeded, splittable randomness for reproducible sketches and experiments."""

import numpy as np


def generator_from_seed(seed: int) -> np.random.Generator:
    """PCG64 generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed))


class RandomStream:
    """A point in a deterministic seed tree.

    Every sketch operator draws one child seed from a stream and records it,
    so the operator can be rebuilt bit-exactly from (dims, seed) alone.
    Parallel consumers (e.g. experiment trials) must use :meth:`split` so no
    two of them share a child sequence.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._ss = np.random.SeedSequence(self.seed)

    def child_seed(self) -> int:
        """Next 64-bit child seed; deterministic in draw order."""
        child = self._ss.spawn(1)[0]
        return int(child.generate_state(1, np.uint64)[0])

    def split(self, n: int) -> list["RandomStream"]:
        """``n`` independent substreams."""
        return [RandomStream(self.child_seed()) for _ in range(n)]

    def generator(self) -> np.random.Generator:
        """Fresh generator keyed by the next child seed."""
        return generator_from_seed(self.child_seed())

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed})"
