"""Adam over a fixed list of parameter tensors."""
from __future__ import annotations

import logging
from typing import Dict, List, Sequence

import numpy as np

from core.model.schema import OptimizerConfig
from core.numerics.tensor import Tensor

logger = logging.getLogger(__name__)


class Adam:
    def __init__(self, params: Sequence[Tensor], cfg: OptimizerConfig):
        self.params: List[Tensor] = list(params)
        self.cfg = cfg
        self.step_count = 0
        self._m: Dict[int, np.ndarray] = {}
        self._v: Dict[int, np.ndarray] = {}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        """One update; parameters without a gradient are left untouched."""
        self.step_count += 1
        b1, b2 = self.cfg.beta1, self.cfg.beta2
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            m = self._m.get(i)
            v = self._v.get(i)
            m = (1.0 - b1) * g if m is None else b1 * m + (1.0 - b1) * g
            v = (1.0 - b2) * g * g if v is None else b2 * v + (1.0 - b2) * g * g
            self._m[i], self._v[i] = m, v
            p.data = p.data - self.cfg.lr * (m / bias1) / (np.sqrt(v / bias2) + self.cfg.eps)
