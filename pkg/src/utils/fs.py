"""
Minimal filesystem helpers.
- ensure_dir(path): create directory if missing
- read_text(path): read UTF-8 text
- write_text(path, text): write UTF-8 text atomically (create parent dirs)
- write_bytes(path, data): write bytes atomically (create parent dirs)
"""
from __future__ import annotations
import os
from pathlib import Path
from typing import Union

PathLike = Union[str, os.PathLike]


def ensure_dir(path: PathLike) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def read_text(path: PathLike) -> str:
    return Path(path).read_text(encoding="utf-8")


def _replace_into(p: Path, payload: bytes) -> None:
    # 同じディレクトリに書いてから rename（途中終了で壊れたファイルを残さない）
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_name(p.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(payload)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, p)


def write_text(path: PathLike, text: str) -> None:
    _replace_into(Path(path), text.encode("utf-8"))


def write_bytes(path: PathLike, data: bytes) -> None:
    _replace_into(Path(path), data)
