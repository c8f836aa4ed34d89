"""Numeric helpers: tempered softmax, unit normalization and gradient checking."""
from __future__ import annotations

import logging
from typing import Callable, Optional, Union

import numpy as np

from core.errors import DegenerateInputError, EvaluationError, InvalidParameterError
from core.numerics.rng import Rng
from core.numerics.tensor import Tensor

logger = logging.getLogger(__name__)

GRAD_CHECK_EPS_RANGE = (1e-6, 1e-3)


def softmax(v: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """Softmax of ``v / tau`` with max-subtraction."""
    if not tau > 0:
        raise InvalidParameterError(f"softmax temperature must be > 0, got {tau}")
    v = np.asarray(v, dtype=np.float64)
    z = (v - np.max(v)) / tau
    e = np.exp(z)
    return e / e.sum()


def l2_normalize(v: Union[np.ndarray, Tensor]) -> Union[np.ndarray, Tensor]:
    """Unit-normalize a vector (or each row of a matrix / Tensor)."""
    if isinstance(v, Tensor):
        return v.l2_normalize(axis=-1)
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise DegenerateInputError("cannot normalize a zero vector")
    return v / norm


def grad_check(f: Callable[[Tensor], Union[Tensor, float]], x: Union[Tensor, np.ndarray],
               eps: float = 1e-5, max_coords: Optional[int] = None, rng: Optional[Rng] = None) -> float:
    """
    Compare the reverse-mode gradient of scalar ``f`` at ``x`` with central differences.

    Returns max over checked coordinates of
    ``|analytic - numeric| / max(1, |numeric|)``. ``max_coords`` limits the
    check to a random subset of coordinates (drawn from ``rng``).
    """
    lo, hi = GRAD_CHECK_EPS_RANGE
    if not lo <= eps <= hi:
        raise InvalidParameterError(f"grad_check eps must lie in [{lo}, {hi}], got {eps}")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)

    leaf = Tensor(base.copy(), requires_grad=True)
    out = f(leaf)
    if not isinstance(out, Tensor):
        raise EvaluationError("grad_check needs f to return a Tensor for the analytic pass")
    if not np.all(np.isfinite(out.data)):
        raise EvaluationError("f returned a non-finite value at x")
    out.backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(base)

    def _eval(arr: np.ndarray) -> float:
        res = f(Tensor(arr))
        val = res.item() if isinstance(res, Tensor) else float(res)
        if not np.isfinite(val):
            raise EvaluationError(f"f evaluated to {val} during finite differences")
        return val

    flat = base.reshape(-1)
    coords = np.arange(flat.size)
    if max_coords is not None and max_coords < flat.size:
        coords = (rng or Rng(0)).choice(flat.size, size=max_coords, replace=False)

    worst = 0.0
    for i in coords:
        plus = flat.copy()
        minus = flat.copy()
        plus[i] += eps
        minus[i] -= eps
        numeric = (_eval(plus.reshape(base.shape)) - _eval(minus.reshape(base.shape))) / (2.0 * eps)
        err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    logger.debug(f"grad_check: {len(coords)} coords, max rel err {worst:.3e}")
    return worst
