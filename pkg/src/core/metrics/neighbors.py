"""Nearest-neighbour memorization test on raw 2-D coordinates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from core.errors import InvalidInputError, InvalidParameterError


@dataclass(frozen=True)
class NeighborReport:
    distances: np.ndarray   # (n_query, k), ascending per row
    indices: np.ndarray     # (n_query, k) into the reference set
    delta: float
    within_delta: float     # fraction of queries with a reference point closer than delta

    @property
    def min_distances(self) -> np.ndarray:
        return self.distances[:, 0]

    @property
    def mean_min_distance(self) -> float:
        return float(self.distances[:, 0].mean())


def nearest_neighbor_report(generated: np.ndarray, train: np.ndarray, k: int = 1,
                            delta: float = 0.05) -> NeighborReport:
    """For each generated point, its ``k`` nearest training points (ties broken by index)."""
    queries = np.asarray(generated, dtype=np.float64)
    ref = np.asarray(train, dtype=np.float64)
    if ref.ndim != 2 or ref.shape[0] == 0:
        raise InvalidInputError("training set must be a non-empty (n, d) array")
    if queries.ndim != 2 or queries.shape[1] != ref.shape[1]:
        raise InvalidInputError(f"query shape {queries.shape} does not match reference {ref.shape}")
    if not 1 <= k <= ref.shape[0]:
        raise InvalidParameterError(f"k must lie in [1, {ref.shape[0]}], got {k}")
    dist = cdist(queries, ref)
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    nearest = np.take_along_axis(dist, order, axis=1)
    within = float(np.mean(nearest[:, 0] <= delta)) if queries.shape[0] else 0.0
    return NeighborReport(nearest, order, float(delta), within)


def reverse_neighbor_report(train: np.ndarray, generated: np.ndarray, k: int = 1,
                            delta: float = 0.05) -> NeighborReport:
    """Training points as queries: how well the generated set covers the data."""
    return nearest_neighbor_report(train, generated, k=k, delta=delta)
