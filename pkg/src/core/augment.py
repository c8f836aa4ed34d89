# coding: utf-8
"""
Latent perturbation and 2-D data augmentation.

``perturb_latent`` adds zero-mean Gaussian noise whose per-coordinate std
depends on the mode; ``augment_data`` rotates each point about the batch mean
by its own random angle and adds isotropic jitter. Both draw all randomness
from the ``Rng`` they are handed.
"""
from __future__ import annotations

import logging
from typing import Union

import numpy as np

from core.model.schema import AugmentationConfig, PerturbationConfig
from core.numerics.rng import Rng
from core.numerics.tensor import Tensor

# --- Logger Setup ---
logger = logging.getLogger(__name__)

# --- Constants ---
NEGATIVE_PRIOR_FLOOR = 0.1  # |z_i| が小さいときの下限 (ゼロ割り防止)

# --- Type Definitions ---
Points = Union[np.ndarray, Tensor]

# ---------------------------
# 潜在ベクトルの摂動
# ---------------------------


def perturbation_scale(z: np.ndarray, cfg: PerturbationConfig, mode: str | None = None) -> np.ndarray:
    """Per-coordinate noise std for latent ``z``."""
    mode = mode or cfg.mode
    z = np.asarray(z, dtype=np.float64)
    if mode == "fixed":
        return np.full_like(z, cfg.sigma_fixed)
    if mode == "noise_related":
        return cfg.l1 * np.abs(z)  # 座標ごとに |z_i| に比例
    if mode == "negative_prior":
        return cfg.l1 / np.maximum(np.abs(z), NEGATIVE_PRIOR_FLOOR)
    raise ValueError(f"unknown perturbation mode: {mode}")


def perturb_latent(z: np.ndarray, cfg: PerturbationConfig, rng: Rng, mode: str | None = None) -> np.ndarray:
    """Return ``z + s * u`` with ``u ~ N(0, I)`` and ``s`` from :func:`perturbation_scale`."""
    z = np.asarray(z, dtype=np.float64)
    noise = rng.normal(size=z.shape)
    return z + perturbation_scale(z, cfg, mode) * noise


# ---------------------------
# 2 次元データの拡張
# ---------------------------


def augment_data(x: Points, cfg: AugmentationConfig, rng: Rng) -> Points:
    """
    Random rotation about the batch mean plus Gaussian jitter, per point.

    Accepts an ndarray or a Tensor (the result stays differentiable w.r.t. ``x``).
    A disabled config returns ``x`` itself.
    """
    if not cfg.enabled or (cfg.rotation_max == 0.0 and cfg.jitter_std == 0.0):
        return x
    as_array = not isinstance(x, Tensor)
    t = Tensor(np.asarray(x, dtype=np.float64)) if as_array else x
    if t.ndim != 2 or t.shape[1] != 2:
        raise ValueError(f"augment_data expects an (n, 2) batch, got {t.shape}")
    n = t.shape[0]
    angles = rng.uniform(-cfg.rotation_max, cfg.rotation_max, size=(n, 1))
    jitter = rng.normal(size=(n, 2)) * cfg.jitter_std

    center = t.mean(axis=0, keepdims=True)
    d = t - center
    # (a, b) -> (-b, a)
    quarter = d @ np.array([[0.0, 1.0], [-1.0, 0.0]])
    out = d * np.cos(angles) + quarter * np.sin(angles) + center + jitter
    return out.data if as_array else out
