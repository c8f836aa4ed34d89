# coding: utf-8
"""
Alternating discriminator / generator updates with periodic evaluation.

Every random draw of iteration ``t`` comes from ``rng.stream(purpose, t)``;
the purposes are ``real_batch``, ``latent_d``, ``latent_g``, ``adv_aug``,
``contrastive_d``, ``contrastive_g``, ``eval`` and ``monitor``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from tqdm import tqdm

from core.augment import augment_data
from core.data.datasets import load_dataset
from core.errors import AbortRunError
from core.gan.losses import discriminator_loss, generator_loss
from core.gan.networks import GanModel, frozen, momentum_update
from core.gan.optim import Adam
from core.gan.strategies import QueueBank, contrastive_term_D, contrastive_term_G, contrastive_weight_d
from core.metrics.evaluation import EvaluationContext, evaluate_generator
from core.model.schema import ExperimentConfig, MetricsRow
from core.numerics.rng import Rng
from core.numerics.tensor import Tensor
from utils.config import progress_enabled

# --- Logger Setup ---
logger = logging.getLogger(__name__)

# ---------------------------
# 学習状態
# ---------------------------


@dataclass
class StepResult:
    """Objective value with its adversarial and (unweighted) contrastive parts."""
    loss: float
    adversarial: float
    contrastive: float


@dataclass
class MonitorLosses:
    loss_d: float
    loss_g: float
    contrastive: float


@dataclass
class TrainState:
    cfg: ExperimentConfig
    model: GanModel
    queues: QueueBank
    d_opt: Adam
    g_opt: Adam
    rng: Rng
    iteration: int = 0

    @classmethod
    def initial(cls, cfg: ExperimentConfig) -> "TrainState":
        cfg = cfg.resolved()
        rng = Rng(cfg.seed)
        model = GanModel.build(cfg.network, rng.stream("init"))
        return cls(
            cfg=cfg,
            model=model,
            queues=QueueBank.from_config(cfg),
            d_opt=Adam(model.discriminator.parameters(), cfg.optimizer),
            g_opt=Adam(model.generator.parameters(), cfg.optimizer),
            rng=rng,
        )


@dataclass
class TrainResult:
    state: TrainState
    rows: List[MetricsRow] = field(default_factory=list)

    @property
    def model(self) -> GanModel:
        return self.state.model


# ---------------------------
# 1 反復ぶんの更新
# ---------------------------


def _check_finite(value: Tensor, iteration: int, phase: str) -> None:
    if not np.all(np.isfinite(value.data)):
        raise AbortRunError(f"non-finite {phase} loss at iteration {iteration}", iteration, phase)


def _latents(state: TrainState, purpose: str, iteration: int) -> np.ndarray:
    return state.rng.stream(purpose, iteration).normal(size=(state.cfg.train_batch, state.cfg.network.latent_dim))


def sample_reals(data: np.ndarray, batch: int, rng: Rng) -> np.ndarray:
    # データ数がバッチより少ないときだけ復元抽出
    idx = rng.choice(len(data), size=batch, replace=batch > len(data))
    return data[idx]


def _adversarial_input(x: np.ndarray, state: TrainState, rng: Rng):
    aug = state.cfg.augmentation
    return augment_data(x, aug, rng) if aug.apply_to_adversarial else x


def d_step(state: TrainState, reals: np.ndarray, iteration: int) -> StepResult:
    """One discriminator update followed by the momentum update of the key encoder."""
    cfg = state.cfg
    model = state.model
    D = model.discriminator
    z = _latents(state, "latent_d", iteration)
    with frozen(model.generator):
        _, fake = model.generator(z)
        fake = fake.data
    adv_rng = state.rng.stream("adv_aug", iteration)
    real_logits = D.logits(_adversarial_input(reals, state, adv_rng.stream("real")))
    fake_logits = D.logits(_adversarial_input(fake, state, adv_rng.stream("fake")))
    adversarial = discriminator_loss(real_logits, fake_logits)
    with frozen(model.generator):
        contrast = contrastive_term_D(model, state.queues.fake, state.queues.real, z, reals, cfg,
                                      state.rng.stream("contrastive_d", iteration), iteration)

    weight = contrastive_weight_d(cfg)
    total = adversarial + weight * contrast if weight > 0 else adversarial
    _check_finite(total, iteration, "d_step")
    _check_finite(contrast, iteration, "d_step")

    state.d_opt.zero_grad()
    total.backward()
    state.d_opt.step()
    # キー側エンコーダは D の更新後に追従させる
    momentum_update(model.encoder, D, cfg.contrastive.m_ema)
    return StepResult(total.item(), adversarial.item(), contrast.item())


def g_step(state: TrainState, iteration: int) -> StepResult:
    """One generator update; the discriminator is frozen for the whole step."""
    cfg = state.cfg
    model = state.model
    z = _latents(state, "latent_g", iteration)
    with frozen(model.discriminator):
        _, fake = model.generator(z)
        fake_in = _adversarial_input(fake, state, state.rng.stream("adv_aug", iteration).stream("gen"))
        adversarial = generator_loss(model.discriminator.logits(fake_in))
        contrast = contrastive_term_G(model, state.queues.fake, z, cfg,
                                      state.rng.stream("contrastive_g", iteration), iteration)
        weight = cfg.weights.lambda_g if cfg.strategy.uses_fake_queue else 0.0
        total = adversarial + weight * contrast if weight > 0 else adversarial
        _check_finite(total, iteration, "g_step")

        state.g_opt.zero_grad()
        total.backward()
        state.g_opt.step()
    return StepResult(total.item(), adversarial.item(), contrast.item())


def monitor_losses(state: TrainState, data: np.ndarray) -> MonitorLosses:
    """Loss values on a monitoring batch without touching parameters or queues."""
    cfg = state.cfg
    model = state.model
    rng = state.rng.stream("monitor", state.iteration)
    reals = sample_reals(data, cfg.train_batch, rng.stream("real"))
    z = rng.stream("latent").normal(size=(cfg.train_batch, cfg.network.latent_dim))
    with frozen(model.generator), frozen(model.discriminator):
        _, fake = model.generator(z)
        fake_logits = model.discriminator.logits(fake)
        loss_d = discriminator_loss(model.discriminator.logits(reals), fake_logits)
        loss_g = generator_loss(fake_logits)
        contrast = contrastive_term_D(model, state.queues.fake, state.queues.real, z, reals, cfg,
                                      rng.stream("contrastive"), state.iteration, enqueue=False)
    return MonitorLosses(loss_d.item(), loss_g.item(), contrast.item())


# ---------------------------
# 学習ループ
# ---------------------------


def _row(state: TrainState, ctx: EvaluationContext, loss_d: float, loss_g: float,
         contrastive: float) -> MetricsRow:
    scores = evaluate_generator(state.model.generator, ctx, state.cfg.metrics,
                                state.rng.stream("eval", state.iteration))
    return MetricsRow(
        iteration=state.iteration,
        loss_d=loss_d,
        loss_g=loss_g,
        contrastive=contrastive,
        queue_size=len(state.queues.real if state.cfg.strategy.variant == "instance_real" else state.queues.fake),
        **scores,
    )


def train(config: ExperimentConfig, callback: Optional[Callable[[MetricsRow], None]] = None,
          data: Optional[np.ndarray] = None, state: Optional[TrainState] = None) -> TrainResult:
    """
    Run ``config.iterations`` D/G rounds, evaluating at iteration 0, every
    ``eval_interval`` iterations and at the last iteration. ``callback`` sees
    each row as it is produced.
    """
    state = state or TrainState.initial(config)
    cfg = state.cfg
    data = load_dataset(cfg.dataset) if data is None else data
    ctx = EvaluationContext.build(data, cfg.dataset)
    result = TrainResult(state)

    def _emit(row: MetricsRow) -> None:
        result.rows.append(row)
        if callback is not None:
            callback(row)

    losses = monitor_losses(state, data)
    _emit(_row(state, ctx, losses.loss_d, losses.loss_g, losses.contrastive))
    logger.info(f"start {cfg.strategy.variant} on {cfg.dataset.label}: {cfg.iterations} iterations (seed={cfg.seed})")

    for it in tqdm(range(1, cfg.iterations + 1), desc=cfg.strategy.variant, disable=not progress_enabled(),
                   leave=False):
        reals = sample_reals(data, cfg.train_batch, state.rng.stream("real_batch", it))
        d = d_step(state, reals, it)
        g = g_step(state, it)
        state.iteration = it  # 評価行はこの反復番号で記録
        if it % cfg.eval_interval == 0 or it == cfg.iterations:
            row = _row(state, ctx, d.adversarial, g.adversarial, d.contrastive)
            logger.info(f"[{it}/{cfg.iterations}] L_D={row.loss_d:.4f} L_G={row.loss_g:.4f} "
                        f"C={row.contrastive:.4f} toy_fid={row.toy_fid:.4f}")
            _emit(row)
    return result
