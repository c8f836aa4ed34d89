# coding: utf-8
"""
Contrastive terms of the discriminator and generator objectives.

Views per variant (query from the live discriminator, key from the momentum
encoder):

- instance_real:          T(x)              vs T'(x)             real head, real queue
- instance_fake:          T(G(z))           vs T'(G(z))          fake head, fake queue
- instance_perturbation:  T(G(z))           vs T'(G(z + eps))    fake head, fake queue
- fakeclr:                as instance_perturbation, noise-related eps and forgetting weights

Randomness comes from the ``rng`` handed in through the ``perturb``,
``view_q``, ``view_k`` and ``view_real`` substreams.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from core.augment import augment_data, perturb_latent
from core.contrastive.losses import forgetting_factors, info_nce, iteration_info_nce
from core.contrastive.queue import NegativeQueue, QueueSchedule
from core.gan.networks import GanModel
from core.model.schema import ExperimentConfig
from core.numerics.rng import Rng
from core.numerics.tensor import Tensor

# --- Logger Setup ---
logger = logging.getLogger(__name__)

# ---------------------------
# キューの組
# ---------------------------


@dataclass
class QueueBank:
    fake: NegativeQueue
    real: NegativeQueue

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "QueueBank":
        cfg = cfg.resolved()
        q = cfg.queue
        fake = NegativeQueue(cfg.network.proj_dim, QueueSchedule(q.initial_size, q.decay_rate or 0.0, q.min_size))
        # 実キュー側は固定長
        real = NegativeQueue(cfg.network.proj_dim,
                             QueueSchedule(q.real_size, 0.0, min(q.min_size, q.real_size)))
        return cls(fake, real)


def contrastive_weight_d(cfg: ExperimentConfig) -> float:
    """Weight of the discriminator-side term for the active variant (0 for baseline)."""
    variant = cfg.strategy.variant
    if variant == "baseline":
        return 0.0
    return cfg.weights.lambda_r if variant == "instance_real" else cfg.weights.lambda_f


# ---------------------------
# 対照項
# ---------------------------


def _negatives_loss(q: Tensor, k: np.ndarray, queue: NegativeQueue, cfg: ExperimentConfig,
                    forgetting: bool) -> Tensor:
    negatives = queue.embeddings
    tau = cfg.contrastive.tau
    if forgetting and len(queue) > 0:
        fcfg = cfg.contrastive.forgetting
        m = forgetting_factors(queue.labels, fcfg.tau_m, fcfg.use_pseudocode_normalization)
        return iteration_info_nce(q, k, negatives, m, tau)
    return info_nce(q, k, negatives, tau)


def _fake_views(model: GanModel, latents: np.ndarray, cfg: ExperimentConfig, rng: Rng):
    G = model.generator
    _, x_q = G(latents)
    x_q = x_q.data
    if cfg.strategy.perturbs_latent:
        z_k = perturb_latent(latents, cfg.perturbation, rng.stream("perturb"), mode=cfg.effective_perturbation_mode)
        _, x_k = G(z_k)
        x_k = x_k.data
    else:
        x_k = x_q  # 摂動なし: 同じ生成点の別ビュー
    return x_q, x_k


def contrastive_term_D(model: GanModel, queue_fake: NegativeQueue, queue_real: NegativeQueue,
                       latents: np.ndarray, reals: np.ndarray, cfg: ExperimentConfig, rng: Rng,
                       iteration: int, enqueue: bool = True) -> Tensor:
    """
    Discriminator-side contrastive loss for ``cfg.strategy.variant``.

    Generator outputs enter as constants. After the loss is formed, the first
    ``enqueue_batch`` keys are pushed with label ``iteration`` (plus
    ``ceil(f * enqueue_batch)`` real keys on the fake queue when
    ``real_in_fake_queue = f > 0`` and ``iteration`` has reached
    ``real_in_fake_queue_start``).
    """
    variant = cfg.strategy.variant
    if variant == "baseline":
        return Tensor(0.0)
    D, E = model.discriminator, model.encoder
    aug = cfg.augmentation

    if variant == "instance_real":
        q = D.project_real(augment_data(reals, aug, rng.stream("view_q")))
        k = E.real_key(augment_data(reals, aug, rng.stream("view_k")))
        loss = info_nce(q, k, queue_real.embeddings, cfg.contrastive.tau)
        if enqueue:
            queue_real.push(k[:cfg.enqueue_batch], iteration)
        return loss

    x_q, x_k = _fake_views(model, latents, cfg, rng)
    q = D.project_fake(augment_data(x_q, aug, rng.stream("view_q")))
    k = E.fake_key(augment_data(x_k, aug, rng.stream("view_k")))
    loss = _negatives_loss(q, k, queue_fake, cfg, cfg.forgetting_enabled)
    if enqueue:
        keys = k[:cfg.enqueue_batch]
        fraction = cfg.strategy.real_in_fake_queue
        if fraction > 0 and iteration >= cfg.strategy.real_in_fake_queue_start:
            n_real = min(math.ceil(fraction * cfg.enqueue_batch), len(reals))
            real_keys = E.fake_key(augment_data(reals[:n_real], aug, rng.stream("view_real")))
            keys = np.concatenate([keys, real_keys], axis=0)
        queue_fake.push(keys, iteration)
    return loss


def contrastive_term_G(model: GanModel, queue_fake: NegativeQueue, latents: np.ndarray,
                       cfg: ExperimentConfig, rng: Rng, iteration: int) -> Tensor:
    """
    Generator-side term: two augmentations of the same G(z) against the fake queue.

    Zero for variants without a fake queue. The query path stays differentiable
    in the generator parameters; keys come from the momentum encoder.
    """
    if not cfg.strategy.uses_fake_queue:
        return Tensor(0.0)
    _, x = model.generator(latents)
    aug = cfg.augmentation
    q = model.discriminator.project_fake(augment_data(x, aug, rng.stream("view_q")))
    k = model.encoder.fake_key(augment_data(x.data, aug, rng.stream("view_k")))
    loss = info_nce(q, k, queue_fake.embeddings, cfg.contrastive.tau)
    if cfg.contrastive.enqueue_generator_keys:
        queue_fake.push(k[:cfg.enqueue_batch], iteration)
    return loss
