"""Counter-based random streams.

A draw is a pure function of ``(key, stream, purpose, counter)``, so a
proposal's randomness depends only on its index and never on which worker
generated it or in what order.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels

PURPOSE_PRIOR = 0
PURPOSE_MODEL = 1


def derive_key(seed, *path):
    """64-bit Philox key for ``seed`` and an optional integer path.

    The path distinguishes independent runs sharing one master seed,
    e.g. ``derive_key(seed, cell, replicate)``.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    words = seq.generate_state(2, dtype=np.uint32)
    return int(words[0]), int(words[1])


@dataclass
class RandomStream:
    """Sequential view over one (key, stream, purpose) triple."""

    key: tuple
    index: int
    purpose: int = PURPOSE_MODEL
    counter: int = field(default=0)

    def uniforms(self, size):
        # every draw position is recomputed from scratch; the counter only
        # remembers how far this view has read
        n = self.counter + int(size)
        block = kernels.uniforms(self.key, np.array([self.index], dtype=np.uint64),
                                 self.purpose, n)
        out = block[0, self.counter:n].copy()
        self.counter = n
        return out

    def uniform(self):
        return float(self.uniforms(1)[0])

    def exponential(self, rate):
        return float(-np.log(self.uniform()) / rate)

    def spawn(self, purpose):
        """Fresh stream over the same proposal index with another purpose."""
        return RandomStream(self.key, self.index, purpose)
