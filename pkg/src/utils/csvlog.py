"""
Fixed-schema CSV files (metrics.csv, summary.csv).

Floats are written with ``repr`` so a read-back parses to the identical value;
rows are flushed as they are written so an aborted run keeps its prefix.
"""
from __future__ import annotations
import csv
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple, Union


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return str(value)


def parse_value(text: str) -> Union[int, float, str, None]:
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


class CsvLog:
    """Header on open, one row per ``write``; columns outside the schema are ignored."""

    def __init__(self, path: str | Path, columns: Sequence[str]):
        self.path = Path(path)
        self.columns = list(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=self.columns, extrasaction="ignore",
                                      lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        self._writer.writeheader()
        self._fh.flush()

    def write(self, row: Mapping[str, Any]) -> None:
        self._writer.writerow({c: format_value(row.get(c)) for c in self.columns})
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> "CsvLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_rows(path: str | Path, columns: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> None:
    with CsvLog(path, columns) as log:
        for row in rows:
            log.write(row)


def read_rows(path: str | Path, text_columns: Sequence[str] = ()) -> Tuple[List[str], List[Dict[str, Any]]]:
    """Parse numbers back; ``text_columns`` stay strings (hashes can look like floats)."""
    keep = set(text_columns)
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        rows = [{k: (v if k in keep else parse_value(v)) for k, v in rec.items()} for rec in reader]
        return list(reader.fieldnames or []), rows
