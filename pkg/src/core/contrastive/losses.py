# coding: utf-8
"""
InfoNCE and its iteration-weighted variant.

Rows of ``q`` and ``k_pos`` are paired query/positive-key embeddings; the
negatives are shared by every row. The loss is the row mean of
``logsumexp(logits) - logits[0]`` with
``logits = [q.k+, q.k-_1 + m_1, ..., q.k-_N + m_N] / tau``.
"""
from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import ContractViolationError, InvalidParameterError
from core.numerics.functional import softmax
from core.numerics.tensor import Tensor, as_tensor, concat

# --- Logger Setup ---
logger = logging.getLogger(__name__)

# --- Constants ---
UNIT_TOLERANCE = 1e-6

# --- Type Definitions ---
Embeddings = Union[Tensor, np.ndarray, Sequence[Sequence[float]]]


def _as_rows(x: Embeddings) -> Tensor:
    t = as_tensor(x) if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    return t.reshape(1, -1) if t.ndim == 1 else t


def _count(negatives: Optional[Embeddings]) -> int:
    if negatives is None:
        return 0
    arr = negatives.data if isinstance(negatives, Tensor) else np.asarray(negatives)
    return 0 if arr.size == 0 else _as_rows(negatives).shape[0]


def _check_unit(name: str, t: Tensor) -> None:
    if t.size == 0:
        return
    norms = np.linalg.norm(t.data, axis=-1)
    worst = float(np.max(np.abs(norms - 1.0)))
    if worst > UNIT_TOLERANCE:
        raise ContractViolationError(f"{name} must be unit-norm (max deviation {worst:.2e})")


# ---------------------------
# InfoNCE
# ---------------------------


def iteration_info_nce(q: Embeddings, k_pos: Embeddings, negatives: Optional[Embeddings],
                       weights: Optional[Union[np.ndarray, Sequence[float]]], tau: float,
                       validate: bool = True) -> Tensor:
    """
    Iteration-weighted InfoNCE; ``weights`` holds the additive logit term m_i per negative.

    ``validate=False`` skips the unit-norm contract (used when differentiating
    with respect to raw embeddings).
    """
    if not tau > 0:
        raise InvalidParameterError(f"temperature must be > 0, got {tau}")
    qt = _as_rows(q)
    kt = _as_rows(k_pos)
    if qt.shape != kt.shape:
        raise ContractViolationError(f"query/key shapes differ: {qt.shape} vs {kt.shape}")
    has_neg = _count(negatives) > 0
    if validate:
        _check_unit("query", qt)
        _check_unit("positive key", kt)

    pos = (qt * kt).sum(axis=1, keepdims=True)
    if has_neg:
        nt = _as_rows(negatives)
        if validate:
            _check_unit("negatives", nt)
        m = np.zeros(nt.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
        if m.shape != (nt.shape[0],):
            raise ContractViolationError(f"expected {nt.shape[0]} weights, got shape {m.shape}")
        neg = qt @ nt.T + m  # m_i は温度で割る前に足す
        logits = concat([pos, neg], axis=1) / tau
    else:
        logits = pos / tau
    rows = logits.logsumexp(axis=1) - logits[:, 0]
    return rows.mean()


def info_nce(q: Embeddings, k_pos: Embeddings, negatives: Optional[Embeddings], tau: float,
             validate: bool = True) -> Tensor:
    """Plain InfoNCE: the weighted form with every m_i = 0."""
    return iteration_info_nce(q, k_pos, negatives, np.zeros(_count(negatives)), tau, validate=validate)


# ---------------------------
# 忘却係数と閉形式の勾配
# ---------------------------


def forgetting_factors(labels: Union[np.ndarray, Sequence[int]], tau_m: float,
                       use_pseudocode_normalization: bool = False) -> np.ndarray:
    """
    Softmax over min-max normalized iteration labels, tempered by ``tau_m``.

    Coinciding labels normalize to zeros (uniform weights). With
    ``use_pseudocode_normalization`` the normalized labels are additionally
    scaled to unit Euclidean norm before the softmax.
    """
    t = np.asarray(labels, dtype=np.float64)
    if t.size == 0:
        raise InvalidParameterError("forgetting_factors needs at least one label")
    if not tau_m > 0:
        raise InvalidParameterError(f"tau_m must be > 0, got {tau_m}")
    span = t.max() - t.min()
    # ラベルがすべて同じなら一様
    t_hat = (t - t.min()) / span if span > 0 else np.zeros_like(t)
    if use_pseudocode_normalization:
        norm = np.linalg.norm(t_hat)
        if norm > 0:
            t_hat = t_hat / norm
    return softmax(t_hat, tau_m)


def iteration_info_nce_grads(q: np.ndarray, k_pos: np.ndarray, negatives: np.ndarray,
                             weights: np.ndarray, tau: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Closed-form gradients of the single-query weighted loss.

    Returns (d/dq, d/dk+, d/dk-_i stacked as rows), with
    ``Y = exp(q.k+/tau) + sum_i exp((q.k-_i + m_i)/tau)``:

        d/dq    =  sum_i e_i (k-_i - k+) / (Y tau)
        d/dk+   = -sum_i e_i q / (Y tau)
        d/dk-_i =  e_i q / (Y tau)
    """
    if not tau > 0:
        raise InvalidParameterError(f"temperature must be > 0, got {tau}")
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    k = np.asarray(k_pos, dtype=np.float64).reshape(-1)
    negs = np.asarray(negatives, dtype=np.float64).reshape(-1, q.size)
    m = np.asarray(weights, dtype=np.float64).reshape(-1)
    if negs.shape[0] == 0:
        zero = np.zeros_like(q)
        return zero, zero.copy(), negs.copy()

    e = np.exp((negs @ q + m) / tau)
    y = np.exp(q @ k / tau) + e.sum()
    grad_q = (e[:, None] * (negs - k[None, :])).sum(axis=0) / (y * tau)
    grad_k = -e.sum() * q / (y * tau)
    grad_negs = e[:, None] * q[None, :] / (y * tau)
    return grad_q, grad_k, grad_negs
