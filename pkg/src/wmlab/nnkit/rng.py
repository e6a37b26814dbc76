"""Seeded randomness with named, independently reproducible substreams."""

from __future__ import annotations

import hashlib

import numpy as np


class Rng:
    """Deterministic random source.

    Identical seed + identical call sequence gives identical draws. ``split``
    derives an independent child stream from a name; the name is hashed with
    sha256 (not Python's salted ``hash``) so streams are stable across runs,
    processes, and platforms. Splitting never advances the parent stream,
    which is what lets optional subsystems (e.g. a generative model that only
    some methods train) consume randomness without perturbing anyone else.
    """

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._spawn_key = tuple(_spawn_key)
        self.gen = np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=self._spawn_key)
        )

    def split(self, name: str) -> "Rng":
        digest = hashlib.sha256(name.encode("utf-8")).digest()
        key = (
            int.from_bytes(digest[:4], "little"),
            int.from_bytes(digest[4:8], "little"),
        )
        return Rng(self.seed, self._spawn_key + key)

    # Thin passthroughs for the draws used in this codebase.

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, size=None):
        return self.gen.standard_normal(size)

    def gumbel(self, size=None):
        return self.gen.gumbel(size=size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def choice(self, n, size, replace=True, p=None):
        return self.gen.choice(n, size=size, replace=replace, p=p)

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self._spawn_key})"
