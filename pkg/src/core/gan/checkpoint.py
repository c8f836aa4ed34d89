"""
Binary checkpoint: magic line, one JSON header line, raw little-endian tensor bytes.

    FAKECLR-CKPT v1\\n
    {"config": {...}, "iteration": t, "tensors": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}\\n
    <payload>

Offsets are relative to the start of the payload. See docs/checkpoint_format.md.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
from pydantic import ValidationError

from core.errors import ContractViolationError, InvalidInputError
from core.gan.networks import GanModel
from core.gan.strategies import QueueBank
from core.model.schema import ExperimentConfig
from core.numerics.rng import Rng
from utils.fs import write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"FAKECLR-CKPT v1\n"
DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


@dataclass
class Checkpoint:
    cfg: ExperimentConfig
    model: GanModel
    queues: QueueBank
    iteration: int


def _tensors(model: GanModel, queues: QueueBank) -> Dict[str, np.ndarray]:
    tensors = {k: np.ascontiguousarray(v, dtype="<f8") for k, v in model.state_dict().items()}
    for name, queue in (("queue_fake", queues.fake), ("queue_real", queues.real)):
        tensors[f"{name}.keys"] = np.ascontiguousarray(queue.embeddings, dtype="<f8")
        tensors[f"{name}.labels"] = np.ascontiguousarray(queue.labels, dtype="<i8")
    return tensors


def encode_checkpoint(cfg: ExperimentConfig, model: GanModel, queues: QueueBank, iteration: int) -> bytes:
    tensors = _tensors(model, queues)
    entries: List[dict] = []
    chunks: List[bytes] = []
    offset = 0
    for name, arr in tensors.items():
        raw = arr.tobytes(order="C")
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {"config": cfg.model_dump(mode="json"), "iteration": int(iteration), "tensors": entries}
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + head + b"\n" + b"".join(chunks)


def save_checkpoint(path: str | Path, cfg: ExperimentConfig, model: GanModel, queues: QueueBank,
                    iteration: int) -> Path:
    p = Path(path)
    write_bytes(p, encode_checkpoint(cfg, model, queues, iteration))
    logger.debug(f"checkpoint written: {p} (iteration {iteration})")
    return p


def _split(blob: bytes) -> Tuple[dict, memoryview]:
    if not blob.startswith(MAGIC):
        raise InvalidInputError("not a fakeclr checkpoint (bad magic line)")
    rest = blob[len(MAGIC):]
    end = rest.find(b"\n")
    if end < 0:
        raise InvalidInputError("truncated checkpoint header")
    try:
        header = json.loads(rest[:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise InvalidInputError(f"malformed checkpoint header: {e}") from e
    return header, memoryview(rest)[end + 1:]


def decode_checkpoint(blob: bytes) -> Checkpoint:
    header, payload = _split(blob)
    try:
        cfg = ExperimentConfig.model_validate(header["config"])
        iteration = int(header["iteration"])
        specs = list(header["tensors"])
    except (KeyError, TypeError, ValueError, ValidationError) as e:
        raise InvalidInputError(f"malformed checkpoint header: {e}") from e

    arrays: Dict[str, np.ndarray] = {}
    for spec in specs:
        dtype = DTYPES.get(spec.get("dtype"))
        if dtype is None:
            raise InvalidInputError(f"unsupported dtype in checkpoint: {spec.get('dtype')!r}")
        start, nbytes = int(spec["offset"]), int(spec["nbytes"])
        shape = tuple(int(s) for s in spec["shape"])
        if start < 0 or start + nbytes > len(payload) or nbytes != int(np.prod(shape)) * dtype.itemsize:
            raise InvalidInputError(f"tensor {spec['name']!r} does not fit the payload")
        arrays[spec["name"]] = np.frombuffer(payload[start:start + nbytes], dtype=dtype).reshape(shape).copy()

    model = GanModel.build(cfg.network, Rng(cfg.seed).stream("init"))
    queues = QueueBank.from_config(cfg)
    try:
        model.load_state_dict(arrays)
        for name, queue in (("queue_fake", queues.fake), ("queue_real", queues.real)):
            queue.restore(arrays[f"{name}.keys"], arrays[f"{name}.labels"])
    except (KeyError, ContractViolationError) as e:
        raise InvalidInputError(f"checkpoint does not match its config: {e}") from e
    return Checkpoint(cfg, model, queues, iteration)


def load_checkpoint(path: str | Path) -> Checkpoint:
    p = Path(path)
    if not p.is_file():
        raise InvalidInputError(f"checkpoint not found: {p}")
    return decode_checkpoint(p.read_bytes())
