"""Deterministic artifact writers: trajectory CSV and JSON reports.

CSV output is RFC-4180 (CRLF line endings, comma separator, '.' decimal
point) with full round-trip float precision, so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["format_float", "write_csv", "write_json", "read_csv_columns"]


def format_float(x) -> str:
    """Shortest representation that round-trips to the same float."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, columns: dict) -> Path:
    """Write named, equal-length columns as an RFC-4180 CSV file."""
    path = Path(path)
    names = list(columns)
    if not names:
        raise ValueError("no columns to write")
    n = {len(np.atleast_1d(columns[k])) for k in names}
    if len(n) != 1:
        raise ValueError("columns differ in length")
    arrays = [np.atleast_1d(columns[k]) for k in names]
    lines = [",".join(names)]
    for i in range(n.pop()):
        lines.append(",".join(format_float(a[i]) for a in arrays))
    path.write_text("\r\n".join(lines) + "\r\n", encoding="utf-8", newline="")
    return path


def read_csv_columns(path) -> dict:
    text = Path(path).read_bytes().decode("utf-8")
    rows = [r for r in text.split("\r\n") if r]
    names = rows[0].split(",")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    if data.size == 0:
        return {k: np.zeros(0) for k in names}
    return {k: data[:, i] for i, k in enumerate(names)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path
