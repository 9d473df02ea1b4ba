"""Seeded random number generation with reproducible sub-streams.

All randomness in the package flows through :class:`Prng`, a thin wrapper
around numpy's PCG64 bit generator (O'Neill's permuted congruential
generator, 64-bit output). Identical seeds produce identical streams on
every platform for a fixed numpy version; the dependency floor is pinned in
pyproject.toml.

Independent sub-streams are derived with :meth:`Prng.derive`, which maps a
string tag to a ``SeedSequence`` spawn key. Derivation is pure: the parent
stream is not advanced, and the same (seed, tag) pair always yields the
same child stream. This is what lets, e.g., the batch-shuffle stream stay
aligned across experiment modes that consume different amounts of
augmentation randomness.
"""

from __future__ import annotations

import zlib

import numpy as np


class Prng:
    """Deterministic random source. Algorithm: PCG64, seeded via SeedSequence."""

    algorithm = "pcg64"

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.spawn_key = _spawn_key
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_spawn_key))
        )

    def derive(self, tag: str) -> "Prng":
        """Independent child stream for `tag`. Does not advance this stream."""
        key = zlib.crc32(tag.encode("utf-8"))
        return Prng(self.seed, self.spawn_key + (key,))

    # -- draws ------------------------------------------------------------

    def uniform(self, size=None) -> np.ndarray | float:
        """float64 in [0, 1)."""
        return self._gen.random(size)

    def normal(self, size=None, scale: float = 1.0) -> np.ndarray | float:
        return self._gen.normal(0.0, scale, size)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Prng(algorithm={self.algorithm!r}, seed={self.seed}, spawn_key={self.spawn_key})"
