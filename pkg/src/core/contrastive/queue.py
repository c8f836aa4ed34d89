# coding: utf-8
"""
FIFO queue of detached key embeddings tagged with the iteration that produced them.

Capacity follows a linear schedule ``N(t) = clamp(round(N0 - r*t), N_min, N0)``;
``r = 0`` is a fixed-size queue.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np

from core.errors import ContractViolationError, InvalidParameterError

# --- Logger Setup ---
logger = logging.getLogger(__name__)

# --- Constants ---
UNIT_TOLERANCE = 1e-6  # 単位ノルムの許容誤差

# ---------------------------
# 容量スケジュール
# ---------------------------


@dataclass(frozen=True)
class QueueSchedule:
    initial_size: int = 1000
    decay_rate: float = 0.0
    min_size: int = 64

    def __post_init__(self) -> None:
        if self.min_size < 1:
            raise InvalidParameterError(f"min_size must be >= 1, got {self.min_size}")
        if self.min_size > self.initial_size:
            raise InvalidParameterError(
                f"min_size ({self.min_size}) exceeds initial_size ({self.initial_size})")
        if self.decay_rate < 0:
            raise InvalidParameterError(f"decay_rate must be >= 0, got {self.decay_rate}")


def queue_target_size(t: int, schedule: QueueSchedule) -> int:
    if t < 0:
        raise InvalidParameterError(f"iteration must be >= 0, got {t}")
    if schedule.min_size > schedule.initial_size:
        raise InvalidParameterError("min_size exceeds initial_size")
    raw = int(round(schedule.initial_size - schedule.decay_rate * t))
    return max(schedule.min_size, min(schedule.initial_size, raw))


# ---------------------------
# キュー本体
# ---------------------------


class QueueEntry(NamedTuple):
    embedding: np.ndarray
    iteration_label: int


class NegativeQueue:
    """Oldest entries sit at the front; labels are non-decreasing front to back."""

    def __init__(self, dim: int, schedule: Optional[QueueSchedule] = None):
        self.dim = int(dim)
        self.schedule = schedule or QueueSchedule()
        self._keys = np.zeros((0, self.dim))
        self._labels = np.zeros(0, dtype=np.int64)

    def __len__(self) -> int:
        return self._labels.size

    def __iter__(self) -> Iterator[QueueEntry]:
        for key, label in zip(self._keys, self._labels):
            yield QueueEntry(key.copy(), int(label))

    @property
    def embeddings(self) -> np.ndarray:
        """Read-only snapshot (rows oldest -> newest)."""
        view = self._keys.view()
        view.flags.writeable = False
        return view

    @property
    def labels(self) -> np.ndarray:
        view = self._labels.view()
        view.flags.writeable = False
        return view

    @property
    def newest_label(self) -> Optional[int]:
        return int(self._labels[-1]) if self._labels.size else None

    def target_size(self, iteration: int) -> int:
        return queue_target_size(iteration, self.schedule)

    def push(self, keys: np.ndarray, iteration: int) -> "NegativeQueue":
        """Append ``keys`` labelled ``iteration`` and evict from the front down to N(iteration)."""
        keys = np.asarray(keys, dtype=np.float64).reshape(-1, self.dim)
        newest = self.newest_label
        if newest is not None and iteration < newest:
            raise ContractViolationError(f"iteration {iteration} is older than newest label {newest}")
        if keys.shape[0]:
            dev = float(np.max(np.abs(np.linalg.norm(keys, axis=1) - 1.0)))
            if dev > UNIT_TOLERANCE:
                raise ContractViolationError(f"queued keys must be unit-norm (max deviation {dev:.2e})")
        self._keys = np.concatenate([self._keys, keys.copy()], axis=0)
        self._labels = np.concatenate([self._labels, np.full(keys.shape[0], int(iteration), dtype=np.int64)])
        # 追加してから先頭 (最古) を容量まで捨てる
        cap = self.target_size(iteration)
        overflow = self._labels.size - cap
        if overflow > 0:
            self._keys = self._keys[overflow:]
            self._labels = self._labels[overflow:]
        logger.debug(f"queue push: +{keys.shape[0]} at t={iteration}, evicted {max(overflow, 0)}, size {len(self)}/{cap}")
        return self

    def restore(self, keys: np.ndarray, labels: np.ndarray) -> None:
        """Replace the contents wholesale (checkpoint loading)."""
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if labels.size > 1 and np.any(np.diff(labels) < 0):
            raise ContractViolationError("restored labels must be non-decreasing")
        keys = np.asarray(keys, dtype=np.float64)
        if keys.shape != (labels.size, self.dim):
            raise ContractViolationError(f"restored keys {keys.shape} do not match {labels.size} labels of dim {self.dim}")
        self._keys = keys.copy()
        self._labels = labels.copy()


def queue_push(queue: NegativeQueue, keys: np.ndarray, iteration: int) -> NegativeQueue:
    return queue.push(keys, iteration)
