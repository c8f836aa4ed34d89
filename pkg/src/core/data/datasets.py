# coding: utf-8
"""
Synthetic 2-D datasets.

Each (kind, seed) owns a fixed pool of 100k samples; a dataset of size n is
the first n entries of a seed-fixed permutation of that pool, so smaller
datasets are subsets of larger ones with the same seed.
"""
from __future__ import annotations

import logging
from functools import lru_cache

import numpy as np

from core.errors import InvalidParameterError
from core.model.schema import DatasetSpec
from core.numerics.rng import Rng

logger = logging.getLogger(__name__)

# --- Constants ---
POOL_SIZE = 100_000  # (kind, seed) ごとの母集団サイズ
COMPONENT_STD = 0.05  # 各ガウス成分の標準偏差
RING_RADIUS = 2.0
RING_COMPONENTS = 8
GRID_SIDE = 5
SPIRAL_TURNS = 1.5


def component_means(kind: str) -> np.ndarray:
    """Mixture means for ``ring`` / ``grid`` (the spiral has none)."""
    if kind == "ring":
        angles = 2.0 * np.pi * np.arange(RING_COMPONENTS) / RING_COMPONENTS
        return RING_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if kind == "grid":
        axis = np.arange(GRID_SIDE) - (GRID_SIDE - 1) / 2.0
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)
    raise InvalidParameterError(f"dataset kind {kind!r} has no mixture means")


def _sample_pool(kind: str, rng: Rng) -> np.ndarray:
    if kind in ("ring", "grid"):
        means = component_means(kind)
        comp = rng.integers(0, len(means), size=POOL_SIZE)
        return means[comp] + rng.normal(size=(POOL_SIZE, 2)) * COMPONENT_STD
    if kind == "spiral":
        # two arms, radius grows linearly with angle
        theta = np.sqrt(rng.uniform(size=POOL_SIZE)) * SPIRAL_TURNS * 2.0 * np.pi
        radius = RING_RADIUS * theta / (SPIRAL_TURNS * 2.0 * np.pi)
        arm = np.where(rng.uniform(size=POOL_SIZE) < 0.5, 1.0, -1.0)
        pts = arm[:, None] * np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
        return pts + rng.normal(size=(POOL_SIZE, 2)) * COMPONENT_STD
    raise InvalidParameterError(f"unknown dataset kind: {kind!r}")


@lru_cache(maxsize=8)
def _pool_and_order(kind: str, seed: int) -> tuple[np.ndarray, np.ndarray]:
    root = Rng(seed).stream(f"pool/{kind}")
    pool = _sample_pool(kind, root.stream("points"))
    order = root.stream("order").permutation(POOL_SIZE)
    pool.flags.writeable = False
    order.flags.writeable = False
    logger.debug(f"built {kind} pool (seed={seed})")
    return pool, order


def dataset_pool(kind: str, seed: int = 0) -> np.ndarray:
    """The full read-only sample pool for ``kind``."""
    return _pool_and_order(kind, seed)[0]


def make_dataset(kind: str, n: int, seed: int = 0) -> np.ndarray:
    if n < 2:
        raise InvalidParameterError(f"dataset needs at least 2 samples, got {n}")
    if n > POOL_SIZE:
        raise InvalidParameterError(f"n={n} exceeds the pool size {POOL_SIZE}")
    pool, order = _pool_and_order(kind, seed)
    return pool[order[:n]].copy()


def load_dataset(spec: DatasetSpec) -> np.ndarray:
    return make_dataset(spec.kind, spec.n_samples, spec.seed)
