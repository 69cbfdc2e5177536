"""Keyed random streams.

Every stochastic event of a simulation (a client's gradient noise in an edge
round, a client's upload quantization, an edge's upload quantization, a
Dirichlet draw) reads from its own stream, keyed by a master seed and a
structured label such as ('grad', client, k, t2). Streams are counter-based
(Philox), so a stream's output does not depend on which other streams exist or
in which order they are consumed; parallel and sequential simulations draw
identical numbers.
"""
import hashlib
from dataclasses import dataclass

import numpy as np


def _label_key(part):
    """Map one label component to a non-negative integer."""
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError('Stream label integers must be non-negative.')
        return int(part)
    digest = hashlib.sha256(str(part).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big', signed=False)


@dataclass(frozen=True)
class RngStream:
    """A random stream fully determined by (seed, label).

    Attributes:
        seed (int): 64-bit unsigned master seed.
        label (tuple): Structured stream id; strings and non-negative ints.
    """
    seed: int
    label: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError('Seed must be a 64-bit unsigned integer.')
        object.__setattr__(self, 'label', tuple(self.label))

    def child(self, *parts):
        """Return the stream labelled by this label extended with parts."""
        return RngStream(self.seed, self.label + tuple(parts))

    def generator(self):
        """Return a fresh numpy Generator positioned at the stream start."""
        sequence = np.random.SeedSequence(
            entropy=int(self.seed),
            spawn_key=tuple(_label_key(p) for p in self.label))
        return np.random.Generator(np.random.Philox(sequence))

    def __str__(self):
        return '{}:{}'.format(self.seed, '/'.join(str(p) for p in self.label))
