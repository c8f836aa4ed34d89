from core.contrastive.losses import (
    forgetting_factors,
    info_nce,
    iteration_info_nce,
    iteration_info_nce_grads,
)
from core.contrastive.queue import NegativeQueue, QueueEntry, QueueSchedule, queue_push, queue_target_size

__all__ = [
    "forgetting_factors",
    "info_nce",
    "iteration_info_nce",
    "iteration_info_nce_grads",
    "NegativeQueue",
    "QueueEntry",
    "QueueSchedule",
    "queue_push",
    "queue_target_size",
]
