# coding: utf-8
"""
Latent-space continuity measures: path length along linear interpolations,
gradient-descent inversion and the gap profile of an interpolation.

A generator here is anything with ``latent_dim``, ``map(z)`` and
``synthesize(w)`` returning Tensors.
"""
from __future__ import annotations

import logging
from contextlib import nullcontext
from dataclasses import dataclass
from typing import Literal, Optional, Protocol, Tuple, Union

import numpy as np

from core.errors import InvalidParameterError
from core.gan.networks import Module, frozen
from core.numerics.rng import Rng
from core.numerics.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

Space = Literal["z", "w"]


class LatentGenerator(Protocol):
    latent_dim: int

    def map(self, z: Union[np.ndarray, Tensor]) -> Tensor: ...

    def synthesize(self, w: Union[np.ndarray, Tensor]) -> Tensor: ...


def lerp(a: np.ndarray, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    return a + t * (b - a)


# ---------------------------
# 経路長 (PPL)
# ---------------------------


@dataclass(frozen=True)
class PathLengthStats:
    mean: float
    std: float
    space: Space
    n_paths: int


def path_length(G: LatentGenerator, space: Space, n_paths: int, eps: float, rng: Rng,
                endpoints: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> PathLengthStats:
    """
    Mean / std of ``|G(lerp(t + eps)) - G(lerp(t))|^2 / eps^2`` over random
    endpoint pairs and ``t ~ U[0, 1)``. ``space="z"`` interpolates before the
    mapping net, ``"w"`` after it. ``endpoints`` fixes (z1, z2) (rows or one
    vector broadcast over all paths).
    """
    if not eps > 0:
        raise InvalidParameterError(f"eps must be > 0, got {eps}")
    if space not in ("z", "w"):
        raise InvalidParameterError(f"space must be 'z' or 'w', got {space!r}")
    if n_paths < 1:
        raise InvalidParameterError(f"n_paths must be >= 1, got {n_paths}")
    if endpoints is None:
        ends = rng.stream("endpoints").normal(size=(2, n_paths, G.latent_dim))
        z1, z2 = ends[0], ends[1]
    else:
        z1 = np.broadcast_to(np.asarray(endpoints[0], dtype=np.float64), (n_paths, G.latent_dim))
        z2 = np.broadcast_to(np.asarray(endpoints[1], dtype=np.float64), (n_paths, G.latent_dim))
    t = rng.stream("t").uniform(0.0, 1.0, size=(n_paths, 1))

    with no_grad():
        if space == "z":
            a = G.synthesize(G.map(lerp(z1, z2, t))).data
            b = G.synthesize(G.map(lerp(z1, z2, t + eps))).data
        else:
            w1, w2 = G.map(z1).data, G.map(z2).data
            a = G.synthesize(lerp(w1, w2, t)).data
            b = G.synthesize(lerp(w1, w2, t + eps)).data
    steps = np.sum((b - a) ** 2, axis=1) / (eps * eps)
    return PathLengthStats(float(steps.mean()), float(steps.std()), space, n_paths)


# ---------------------------
# 潜在ベクトルの逆推定
# ---------------------------


@dataclass(frozen=True)
class InversionResult:
    z: np.ndarray           # best latent per target row
    residual: float         # mean squared distance of G(z) to the targets at the best latents
    residuals: np.ndarray   # per-row squared distances


def _squared_residuals(G: LatentGenerator, z: Union[np.ndarray, Tensor], target: np.ndarray) -> Tensor:
    diff = G.synthesize(G.map(z)) - target
    return (diff * diff).sum(axis=1)


def invert(G: LatentGenerator, x_target: np.ndarray, steps: int, lr: float, rng: Rng,
           init: Optional[np.ndarray] = None) -> InversionResult:
    """Gradient descent on ``|G(z) - x|^2`` from ``init`` (or a standard-normal draw), row-wise."""
    if steps < 1:
        raise InvalidParameterError(f"steps must be >= 1, got {steps}")
    if not lr > 0:
        raise InvalidParameterError(f"lr must be > 0, got {lr}")
    target = np.asarray(x_target, dtype=np.float64)
    single = target.ndim == 1
    target = target.reshape(1, -1) if single else target
    n = target.shape[0]
    if init is None:
        z = rng.normal(size=(n, G.latent_dim))
    else:
        z = np.array(np.broadcast_to(np.asarray(init, dtype=np.float64), (n, G.latent_dim)))

    best_z = z.copy()
    best = np.full(n, np.inf)
    guard = frozen(G) if isinstance(G, Module) else nullcontext()
    with guard:
        for _ in range(steps):
            zt = Tensor(z, requires_grad=True)
            res = _squared_residuals(G, zt, target)
            improved = res.data < best
            best = np.where(improved, res.data, best)
            best_z[improved] = z[improved]
            res.sum().backward()
            z = z - lr * zt.grad
        with no_grad():
            final = _squared_residuals(G, z, target).data
    improved = final < best
    best = np.where(improved, final, best)
    best_z[improved] = z[improved]
    logger.debug(f"inversion: {n} targets, {steps} steps, mean residual {best.mean():.3e}")
    return InversionResult(best_z[0] if single else best_z, float(best.mean()), best)


# ---------------------------
# 補間経路のギャップ
# ---------------------------


@dataclass(frozen=True)
class GapProfile:
    gaps: np.ndarray        # distances between consecutive outputs
    max_ratio: float        # largest gap over the mean gap


def interpolation_gaps(G: LatentGenerator, z_a: np.ndarray, z_b: np.ndarray, n_points: int = 64,
                       space: Space = "z") -> GapProfile:
    """Consecutive output distances along ``lerp(z_a, z_b)``; a jump shows up as ``max_ratio >> 1``."""
    if n_points < 2:
        raise InvalidParameterError(f"n_points must be >= 2, got {n_points}")
    t = np.linspace(0.0, 1.0, n_points).reshape(-1, 1)
    z_a = np.asarray(z_a, dtype=np.float64).reshape(1, -1)
    z_b = np.asarray(z_b, dtype=np.float64).reshape(1, -1)
    with no_grad():
        if space == "z":
            x = G.synthesize(G.map(lerp(z_a, z_b, t))).data
        else:
            w_a, w_b = G.map(z_a).data, G.map(z_b).data
            x = G.synthesize(lerp(w_a, w_b, t)).data
    gaps = np.linalg.norm(np.diff(x, axis=0), axis=1)
    mean_gap = float(gaps.mean())
    ratio = float(gaps.max() / mean_gap) if mean_gap > 0 else 1.0
    return GapProfile(gaps, ratio)
