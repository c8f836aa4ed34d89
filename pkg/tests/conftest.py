import copy
from typing import Any, Callable, Dict

import numpy as np
import pytest

from core.model.schema import ExperimentConfig
from core.numerics.functional import l2_normalize
from core.numerics.rng import Rng

# Small enough that a full train + evaluation takes well under a second.
TINY: Dict[str, Any] = {
    "dataset": {"kind": "ring", "n_samples": 100, "seed": 0},
    "network": {"latent_dim": 4, "w_dim": 4, "feature_dim": 8, "proj_dim": 4, "hidden": 16},
    "queue": {"initial_size": 64, "min_size": 8, "real_size": 64},
    "metrics": {"fid_samples": 200, "kid_samples": 50, "ppl_paths": 16, "nn_samples": 50},
    "train_batch": 16,
    "enqueue_batch": 8,
    "iterations": 4,
    "eval_interval": 2,
    "seed": 0,
}


def _merge(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


@pytest.fixture(autouse=True)
def _quiet_env(monkeypatch, tmp_path):
    monkeypatch.setenv("FAKECLR_PROGRESS", "0")
    monkeypatch.setenv("FAKECLR_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.delenv("FAKECLR_SEED", raising=False)


@pytest.fixture
def tiny_dict() -> Callable[..., Dict[str, Any]]:
    def _make(**overrides: Any) -> Dict[str, Any]:
        return _merge(TINY, overrides)
    return _make


@pytest.fixture
def make_config(tiny_dict) -> Callable[..., ExperimentConfig]:
    def _make(**overrides: Any) -> ExperimentConfig:
        return ExperimentConfig.model_validate(tiny_dict(**overrides))
    return _make


@pytest.fixture
def unit_rows() -> Callable[[int, int, int], np.ndarray]:
    def _make(n: int, p: int, seed: int = 0) -> np.ndarray:
        return l2_normalize(Rng(seed).stream("unit_rows").normal(size=(n, p)))
    return _make
