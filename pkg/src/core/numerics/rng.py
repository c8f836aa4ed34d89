"""
Deterministic, splittable random streams.

``Rng`` wraps numpy's counter-based Philox bit generator. Children derived with
``stream(name, *index)`` are keyed by a CRC32 of the name plus integer indices
and are independent of how much the parent has been consumed, so the same
(seed, name, index) always yields the same numbers.
"""
from __future__ import annotations

import zlib
from typing import Optional, Sequence, Tuple, Union

import numpy as np

_MASK64 = (1 << 64) - 1

Shape = Union[int, Tuple[int, ...], None]


class Rng:
    ALGORITHM = "philox4x64"

    def __init__(self, seed: int, key: Sequence[int] = ()):
        self.seed = int(seed) & _MASK64
        self.key: Tuple[int, ...] = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def stream(self, name: str, *index: int) -> "Rng":
        tag = zlib.crc32(name.encode("utf-8"))
        return Rng(self.seed, self.key + (tag,) + tuple(int(i) for i in index))

    def normal(self, size: Shape = None, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(loc, scale, size=size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size: Shape = None) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def integers(self, low: int, high: Optional[int] = None, size: Shape = None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, key={self.key})"
