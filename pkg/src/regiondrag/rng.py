"""Counter-based random source.

Every stochastic draw in the pipeline is addressed by (seed, purpose,
timestep) instead of consuming a shared sequential stream, so a run is
bit-reproducible no matter how stages are ordered or parallelised, and any
single draw can be replayed in isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numpy.random import Generator, Philox


def _derive_key(seed: int, purpose: str, timestep: int) -> int:
    digest = hashlib.blake2b(
        f"{seed}:{purpose}:{timestep}".encode(), digest_size=16
    ).digest()
    return int.from_bytes(digest, "little")


class CounterRng:
    """Addressable source of Gaussian draws keyed by (purpose, timestep)."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def generator(self, purpose: str, timestep: int = 0) -> Generator:
        return Generator(Philox(key=_derive_key(self.seed, purpose, timestep)))

    def normal(self, purpose: str, timestep: int, shape) -> np.ndarray:
        return self.generator(purpose, timestep).standard_normal(shape)
