"""
Experiment configuration and logged-row models.

Every model round-trips through JSON; ``ExperimentConfig.resolved()`` fills
the derived defaults so a written ``config.json`` reproduces the run alone.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.errors import InvalidInputError, InvalidParameterError

DatasetKind = Literal["ring", "grid", "spiral"]
Variant = Literal["baseline", "instance_real", "instance_fake", "instance_perturbation", "fakeclr"]
PerturbationMode = Literal["fixed", "noise_related", "negative_prior"]

FAKE_QUEUE_VARIANTS = ("instance_fake", "instance_perturbation", "fakeclr")
PERTURBED_VARIANTS = ("instance_perturbation", "fakeclr")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSpec(_Strict):
    kind: DatasetKind = "ring"
    n_samples: int = Field(100, ge=2)
    seed: int = Field(0, ge=0)

    @classmethod
    def parse(cls, spec: str) -> "DatasetSpec":
        """``kind[:n[:seed]]``, e.g. ``ring:100`` or ``grid:1000:3``."""
        parts = [p.strip() for p in spec.split(":") if p.strip()]
        if not parts or len(parts) > 3:
            raise InvalidInputError(f"malformed dataset spec: {spec!r}")
        try:
            fields: Dict[str, Any] = {"kind": parts[0]}
            if len(parts) > 1:
                fields["n_samples"] = int(parts[1])
            if len(parts) > 2:
                fields["seed"] = int(parts[2])
            return cls(**fields)
        except (ValueError, TypeError) as e:
            raise InvalidInputError(f"malformed dataset spec: {spec!r} ({e})") from e

    @property
    def label(self) -> str:
        return f"{self.kind}-{self.n_samples}"


class NetworkConfig(_Strict):
    latent_dim: int = Field(8, ge=1)
    w_dim: int = Field(8, ge=1)
    feature_dim: int = Field(32, ge=1)
    proj_dim: int = Field(16, ge=2)
    hidden: int = Field(64, ge=1)
    leaky_slope: float = Field(0.2, ge=0.0, lt=1.0)


class OptimizerConfig(_Strict):
    # 2-D トイ GAN の定番設定 (Adam 1e-3, beta1=0.5)
    lr: float = Field(1e-3, gt=0)
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)


class ForgettingConfig(_Strict):
    tau_m: float = Field(0.01, gt=0)
    enabled: bool = False
    use_pseudocode_normalization: bool = False


class ContrastiveConfig(_Strict):
    tau: float = Field(0.07, gt=0)
    m_ema: float = Field(0.999, ge=0, le=1)
    forgetting: ForgettingConfig = Field(default_factory=ForgettingConfig)
    # generator-side keys are not enqueued unless asked
    enqueue_generator_keys: bool = False


class PerturbationConfig(_Strict):
    mode: PerturbationMode = "fixed"
    l1: float = Field(0.1, ge=0)
    sigma_fixed: float = Field(0.1, ge=0)


class AugmentationConfig(_Strict):
    enabled: bool = True
    jitter_std: float = Field(0.05, ge=0)
    rotation_max: float = Field(0.15, ge=0, le=math.pi)
    apply_to_adversarial: bool = False


class LossWeights(_Strict):
    lambda_f: float = Field(1.0, ge=0)
    lambda_r: float = Field(1.0, ge=0)
    lambda_g: float = Field(1.0, ge=0)


class QueueConfig(_Strict):
    initial_size: int = Field(1000, ge=1)
    decay_rate: Optional[float] = Field(None, ge=0)
    min_size: int = Field(64, ge=1)
    real_size: int = Field(1000, ge=1)

    @model_validator(mode="after")
    def _check_bounds(self) -> "QueueConfig":
        if self.min_size > self.initial_size:
            raise ValueError(f"min_size ({self.min_size}) exceeds initial_size ({self.initial_size})")
        return self


class StrategyConfig(_Strict):
    variant: Variant = "fakeclr"
    noise_related: bool = False
    forgetting: bool = False
    diversity_queue: bool = False
    real_in_fake_queue: float = Field(0.0, ge=0, le=1)
    # 実サンプルのキー投入を始める反復 (0: 学習開始から)
    real_in_fake_queue_start: int = Field(0, ge=0)

    @model_validator(mode="before")
    @classmethod
    def _fakeclr_implies_all(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("variant", "fakeclr") == "fakeclr":
            data = {**data, "noise_related": True, "forgetting": True, "diversity_queue": True}
        return data

    @property
    def uses_fake_queue(self) -> bool:
        return self.variant in FAKE_QUEUE_VARIANTS

    @property
    def perturbs_latent(self) -> bool:
        return self.variant in PERTURBED_VARIANTS


class MetricsConfig(_Strict):
    fid_samples: int = Field(10_000, ge=2)
    kid_samples: int = Field(1000, ge=2)
    ppl_paths: int = Field(2000, ge=1)
    ppl_eps: float = Field(1e-4, gt=0)
    nn_samples: int = Field(1000, ge=1)
    nn_delta: float = Field(0.05, gt=0)
    inversion_steps: int = Field(500, ge=1)
    inversion_lr: float = Field(0.05, gt=0)
    gap_points: int = Field(64, ge=2)


class ExperimentConfig(_Strict):
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    strategy: StrategyConfig = Field(default_factory=StrategyConfig)
    contrastive: ContrastiveConfig = Field(default_factory=ContrastiveConfig)
    perturbation: PerturbationConfig = Field(default_factory=PerturbationConfig)
    augmentation: AugmentationConfig = Field(default_factory=AugmentationConfig)
    weights: LossWeights = Field(default_factory=LossWeights)
    queue: QueueConfig = Field(default_factory=QueueConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    enqueue_batch: int = Field(64, ge=1)
    train_batch: int = Field(64, ge=1)
    iterations: int = Field(2000, ge=0)
    eval_interval: int = Field(500, ge=1)
    seed: int = Field(0, ge=0)
    out_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_batches(self) -> "ExperimentConfig":
        if self.enqueue_batch > self.train_batch:
            raise ValueError(f"enqueue_batch ({self.enqueue_batch}) exceeds train_batch ({self.train_batch})")
        return self

    # --- derived settings ---
    @property
    def forgetting_enabled(self) -> bool:
        return self.strategy.uses_fake_queue and (self.strategy.forgetting or self.contrastive.forgetting.enabled)

    @property
    def effective_perturbation_mode(self) -> str:
        return "noise_related" if self.strategy.noise_related else self.perturbation.mode

    def resolved(self) -> "ExperimentConfig":
        """
        Copy with the queue decay rate written out (N0 / (2 * iterations), 0
        without the diversity queue) and the real-key start iteration cleared
        when no real keys are queued.
        """
        data = self.model_dump()
        queue = data["queue"]
        if queue["decay_rate"] is None:
            # the fake queue halves over the run
            queue["decay_rate"] = (queue["initial_size"] / (2.0 * self.iterations)) if self.iterations > 0 else 0.0
        if not self.strategy.diversity_queue:
            queue["decay_rate"] = 0.0
        # 実キーを入れない設定では開始反復に意味がない (ハッシュを揃える)
        if data["strategy"]["real_in_fake_queue"] == 0.0:
            data["strategy"]["real_in_fake_queue_start"] = 0
        return ExperimentConfig.model_validate(data)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)


def config_hash(cfg: ExperimentConfig) -> str:
    payload = cfg.resolved().model_dump(mode="json")
    payload.pop("out_dir", None)
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


class MetricsRow(_Strict):
    """One evaluation point; field order is the CSV column order."""
    iteration: int = Field(ge=0)
    loss_d: float
    loss_g: float
    contrastive: float
    queue_size: int = Field(ge=0)
    toy_fid: float
    toy_kid: float
    ppl_z_mean: float
    ppl_w_mean: float
    ppl_w_std: float
    nn_min_dist: float

    @model_validator(mode="after")
    def _finite(self) -> "MetricsRow":
        for name, value in self.model_dump().items():
            if isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"{name} is not finite: {value}")
        return self

    @classmethod
    def columns(cls) -> List[str]:
        return list(cls.model_fields.keys())


class SweepGrid(_Strict):
    """Dotted-path overrides; the cartesian product of the value lists is run once per seed."""
    overrides: Dict[str, List[Any]] = Field(min_length=1)
    seeds: Optional[List[int]] = None


def _read_json(path: str | Path) -> Any:
    p = Path(path)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise InvalidInputError(f"file not found: {p}") from e
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{p} is not valid JSON: {e}") from e


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(_read_json(path))
    except ValidationError as e:
        raise InvalidParameterError(f"invalid experiment config {path}: {e}") from e


def load_sweep_grid(path: str | Path) -> SweepGrid:
    try:
        return SweepGrid.model_validate(_read_json(path))
    except ValidationError as e:
        raise InvalidParameterError(f"invalid sweep grid {path}: {e}") from e
