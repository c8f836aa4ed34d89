"""Metric bundle logged at every evaluation point of a run."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from core.data.datasets import dataset_pool
from core.metrics.distribution import GaussianSummary, fit_gaussian, frechet_distance, mmd_poly
from core.metrics.latent import LatentGenerator, path_length
from core.metrics.neighbors import nearest_neighbor_report
from core.model.schema import DatasetSpec, MetricsConfig
from core.numerics.rng import Rng
from core.numerics.tensor import no_grad

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvaluationContext:
    """Reference data: the training subset and the full sample pool it was drawn from."""
    train: np.ndarray
    pool: np.ndarray
    pool_summary: GaussianSummary

    @classmethod
    def build(cls, train: np.ndarray, spec: DatasetSpec) -> "EvaluationContext":
        pool = dataset_pool(spec.kind, spec.seed)
        return cls(np.asarray(train, dtype=np.float64), pool, fit_gaussian(pool))


def sample_generator(G: LatentGenerator, n: int, rng: Rng) -> np.ndarray:
    z = rng.normal(size=(n, G.latent_dim))
    with no_grad():
        return G.synthesize(G.map(z)).data


def evaluate_generator(G: LatentGenerator, ctx: EvaluationContext, cfg: MetricsConfig,
                       rng: Rng) -> Dict[str, float]:
    """toy-FID against the pool, toy-KID against a pool subset, z/w path lengths and NN distance to train."""
    generated = sample_generator(G, cfg.fid_samples, rng.stream("samples"))
    toy_fid = frechet_distance(fit_gaussian(generated), ctx.pool_summary)

    n_kid = min(cfg.kid_samples, len(generated), len(ctx.pool))
    ref = ctx.pool[rng.stream("kid").choice(len(ctx.pool), size=n_kid, replace=False)]
    toy_kid = mmd_poly(generated[:n_kid], ref)

    ppl_z = path_length(G, "z", cfg.ppl_paths, cfg.ppl_eps, rng.stream("ppl"))
    ppl_w = path_length(G, "w", cfg.ppl_paths, cfg.ppl_eps, rng.stream("ppl"))

    nn = nearest_neighbor_report(generated[:cfg.nn_samples], ctx.train, k=1, delta=cfg.nn_delta)
    return {
        "toy_fid": toy_fid,
        "toy_kid": toy_kid,
        "ppl_z_mean": ppl_z.mean,
        "ppl_w_mean": ppl_w.mean,
        "ppl_w_std": ppl_w.std,
        "nn_min_dist": nn.mean_min_distance,
    }
