"""Global flags read from the environment (``.env`` is loaded by the CLI)."""
from __future__ import annotations
import os as _os
from pathlib import Path
from typing import Optional

from core.errors import InvalidParameterError

# Seed override for `fakeclr run` / `fakeclr sweep` (CLI --seed still wins)
SEED_ENV = "FAKECLR_SEED"

# Console log level; the file handler always records DEBUG
LOG_LEVEL_ENV = "LOG_LEVEL"
DEFAULT_LOG_LEVEL = "INFO"

# Directory of the global app.log
LOG_DIR_ENV = "FAKECLR_LOG_DIR"
DEFAULT_LOG_DIR = "logs"

# tqdm bars on/off ("0" disables)
PROGRESS_ENV = "FAKECLR_PROGRESS"


def env_seed() -> Optional[int]:
    raw = _os.getenv(SEED_ENV, "").strip()
    if not raw:
        return None
    try:
        seed = int(raw)
    except ValueError as e:
        raise InvalidParameterError(f"{SEED_ENV} must be a non-negative integer, got {raw!r}") from e
    if seed < 0:
        raise InvalidParameterError(f"{SEED_ENV} must be a non-negative integer, got {raw!r}")
    return seed


def log_level() -> str:
    return _os.getenv(LOG_LEVEL_ENV, DEFAULT_LOG_LEVEL).upper()


def log_dir() -> Path:
    return Path(_os.getenv(LOG_DIR_ENV, DEFAULT_LOG_DIR))


def progress_enabled() -> bool:
    return _os.getenv(PROGRESS_ENV, "1").strip().lower() not in ("0", "false", "no", "off")
