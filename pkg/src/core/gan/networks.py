# coding: utf-8
"""
Toy generator / discriminator networks and the momentum key encoder.

Parameters are leaf ``Tensor`` objects owned by ``Module`` instances; names
come from attribute paths (``backbone.layers.0.weight``) so the momentum
encoder can be matched against the live discriminator by name.
"""
from __future__ import annotations

import copy
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np

from core.errors import ContractViolationError, InvalidParameterError
from core.model.schema import NetworkConfig
from core.numerics.rng import Rng
from core.numerics.tensor import Tensor, as_tensor

# --- Logger Setup ---
logger = logging.getLogger(__name__)

# --- Type Definitions ---
Batch = Union[np.ndarray, Tensor]

# ---------------------------
# パラメータ管理
# ---------------------------


class Module:
    """Parameter container; attribute order fixes parameter order."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            path = f"{prefix}{name}"
            if isinstance(value, Tensor):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        if missing:
            raise ContractViolationError(f"state is missing parameters: {missing[:5]}")
        for name, param in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ContractViolationError(f"{name}: shape {value.shape} != {param.shape}")
            param.data = value.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def clone(self) -> "Module":
        return copy.deepcopy(self)


def parameter(values: np.ndarray) -> Tensor:
    return Tensor(values, requires_grad=True)


@contextmanager
def frozen(module: Module) -> Iterator[Module]:
    """Stop gradient tracking into ``module``'s parameters for the block."""
    params = module.parameters()
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield module
    finally:
        for p, flag in zip(params, saved):
            p.requires_grad = flag


# ---------------------------
# 生成器・識別器
# ---------------------------


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: Rng):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = parameter(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.bias = parameter(np.zeros(n_out))

    def __call__(self, x: Batch) -> Tensor:
        return as_tensor(x) @ self.weight + self.bias


class MLP(Module):
    """Linear layers with leaky-ReLU between them (and after the last when ``final_activation``)."""

    def __init__(self, dims: Sequence[int], rng: Rng, slope: float = 0.2, final_activation: bool = False):
        if len(dims) < 2:
            raise InvalidParameterError(f"MLP needs at least two dims, got {list(dims)}")
        self.layers = [Linear(a, b, rng.stream("layer", i)) for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]))]
        self._slope = slope
        self._final_activation = final_activation

    def __call__(self, x: Batch) -> Tensor:
        h = as_tensor(x)
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < last or self._final_activation:
                h = h.leaky_relu(self._slope)
        return h


class Generator(Module):
    """Mapping net z -> w followed by synthesis net w -> x (2-D)."""

    def __init__(self, cfg: NetworkConfig, rng: Rng):
        self.mapping = MLP([cfg.latent_dim, cfg.hidden, cfg.w_dim], rng.stream("mapping"), cfg.leaky_slope)
        self.synthesis = MLP([cfg.w_dim, cfg.hidden, cfg.hidden, 2], rng.stream("synthesis"), cfg.leaky_slope)
        self._latent_dim = cfg.latent_dim

    @property
    def latent_dim(self) -> int:
        return self._latent_dim

    def map(self, z: Batch) -> Tensor:
        return self.mapping(z)

    def synthesize(self, w: Batch) -> Tensor:
        return self.synthesis(w)

    def __call__(self, z: Batch) -> Tuple[Tensor, Tensor]:
        w = self.map(z)
        return w, self.synthesize(w)


def generator_forward(G: Generator, z: Batch) -> Tuple[Tensor, Tensor]:
    return G(z)


class Discriminator(Module):
    """Shared backbone with a logit head and two unit-norm projection heads."""

    def __init__(self, cfg: NetworkConfig, rng: Rng):
        self.backbone = MLP([2, cfg.hidden, cfg.feature_dim], rng.stream("backbone"), cfg.leaky_slope,
                            final_activation=True)
        self.head_d = Linear(cfg.feature_dim, 1, rng.stream("head_d"))
        self.fake_head = MLP([cfg.feature_dim, cfg.feature_dim, cfg.proj_dim], rng.stream("fake_head"),
                             cfg.leaky_slope)
        self.real_head = MLP([cfg.feature_dim, cfg.feature_dim, cfg.proj_dim], rng.stream("real_head"),
                             cfg.leaky_slope)

    def features(self, x: Batch) -> Tensor:
        return self.backbone(x)

    def logits(self, x: Batch) -> Tensor:
        return self.head_d(self.features(x)).reshape(-1)

    def project_fake(self, x: Batch) -> Tensor:
        return self.fake_head(self.features(x)).l2_normalize(axis=-1)

    def project_real(self, x: Batch) -> Tensor:
        return self.real_head(self.features(x)).l2_normalize(axis=-1)


# ---------------------------
# モメンタムエンコーダ
# ---------------------------


class MomentumEncoder(Module):
    """
    EMA copy of the discriminator backbone and both projection heads.

    Never trained directly; keys are returned as plain arrays.
    """

    def __init__(self, discriminator: Discriminator):
        self.backbone = discriminator.backbone.clone()
        self.fake_head = discriminator.fake_head.clone()
        self.real_head = discriminator.real_head.clone()
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None

    def fake_key(self, x: Batch) -> np.ndarray:
        return self.fake_head(self.backbone(x)).l2_normalize(axis=-1).data

    def real_key(self, x: Batch) -> np.ndarray:
        return self.real_head(self.backbone(x)).l2_normalize(axis=-1).data


def momentum_update(encoder: MomentumEncoder, live: Discriminator, m_ema: float) -> MomentumEncoder:
    """theta_k <- m * theta_k + (1 - m) * theta_q for every encoder parameter."""
    if not 0.0 <= m_ema <= 1.0:
        raise InvalidParameterError(f"m_ema must lie in [0, 1], got {m_ema}")
    live_params = dict(live.named_parameters())
    for name, key_param in encoder.named_parameters():
        query = live_params.get(name)
        if query is None:
            raise ContractViolationError(f"live discriminator has no parameter {name!r}")
        if query.shape != key_param.shape:
            raise ContractViolationError(f"{name}: encoder shape {key_param.shape} != live shape {query.shape}")
        # 要素ごとの EMA
        key_param.data = m_ema * key_param.data + (1.0 - m_ema) * query.data
    return encoder


@dataclass
class GanModel:
    generator: Generator
    discriminator: Discriminator
    encoder: MomentumEncoder

    @classmethod
    def build(cls, cfg: NetworkConfig, rng: Rng) -> "GanModel":
        G = Generator(cfg, rng.stream("init_g"))
        D = Discriminator(cfg, rng.stream("init_d"))
        return cls(G, D, MomentumEncoder(D))

    def state_dict(self) -> Dict[str, np.ndarray]:
        state: Dict[str, np.ndarray] = {}
        for prefix, module in (("generator", self.generator), ("discriminator", self.discriminator),
                               ("encoder", self.encoder)):
            state.update({f"{prefix}.{k}": v for k, v in module.state_dict().items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for prefix, module in (("generator", self.generator), ("discriminator", self.discriminator),
                               ("encoder", self.encoder)):
            head = f"{prefix}."
            module.load_state_dict({k[len(head):]: v for k, v in state.items() if k.startswith(head)})
