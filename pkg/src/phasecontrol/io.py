"""CSV and JSON serialization for trajectories, controls, and reports.

Every floating-point value is written with 17 significant digits so a
write/read cycle reproduces the doubles bit for bit.  Trajectory tables
use one row per (time, node) pair; nodal fields drop the time column.
JSON output is emitted by a small recursive writer so float formatting
stays under our control; non-finite values become null.
"""

from __future__ import annotations

import csv
import io as _io
import json
from dataclasses import fields, is_dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "format_float",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_field_csv",
    "read_field_csv",
    "write_json_report",
    "to_jsonable",
]


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(path, table) -> None:
    """Write a (n_times, n_nodes) table as time_index,node_index,value rows."""
    table = np.asarray(table, float)
    if table.ndim != 2:
        raise ValueError("trajectory table must be two-dimensional")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_index", "node_index", "value"])
        for n, row in enumerate(table):
            for m, v in enumerate(row):
                w.writerow([n, m, format_float(v)])


def read_trajectory_csv(path) -> np.ndarray:
    """Read a table written by write_trajectory_csv back into an array."""
    rows = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["time_index", "node_index", "value"]:
            raise ValueError(f"{path}: not a trajectory table")
        for rec in r:
            if len(rec) != 3:
                raise ValueError(f"{path}: malformed row {rec!r}")
            rows.append((int(rec[0]), int(rec[1]), float(rec[2])))
    if not rows:
        raise ValueError(f"{path}: empty table")
    nt = max(t for t, _, _ in rows) + 1
    nm = max(m for _, m, _ in rows) + 1
    out = np.full((nt, nm), np.nan)
    for t, m, v in rows:
        out[t, m] = v
    if np.isnan(out).any():
        raise ValueError(f"{path}: incomplete table")
    return out


def write_field_csv(path, values) -> None:
    """Write a nodal field as node_index,value rows."""
    values = np.asarray(values, float)
    if values.ndim != 1:
        raise ValueError("field must be one-dimensional")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_index", "value"])
        for m, v in enumerate(values):
            w.writerow([m, format_float(v)])


def read_field_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["node_index", "value"]:
            raise ValueError(f"{path}: not a field table")
        for rec in r:
            if len(rec) != 2:
                raise ValueError(f"{path}: malformed row {rec!r}")
            rows.append((int(rec[0]), float(rec[1])))
    if not rows:
        raise ValueError(f"{path}: empty table")
    out = np.full(max(m for m, _ in rows) + 1, np.nan)
    for m, v in rows:
        out[m] = v
    if np.isnan(out).any():
        raise ValueError(f"{path}: incomplete table")
    return out


def to_jsonable(obj):
    """Flatten dataclasses/arrays/numpy scalars into plain containers."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dump(obj, out: _io.TextIOBase, indent: int) -> None:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.write(f'{pad}  {json.dumps(k)}: ')
            _dump(v, out, indent + 1)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(pad + "}")
    elif isinstance(obj, list):
        if not obj:
            out.write("[]")
            return
        out.write("[\n")
        for i, v in enumerate(obj):
            out.write(pad + "  ")
            _dump(v, out, indent + 1)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(pad + "]")
    elif isinstance(obj, bool):
        out.write("true" if obj else "false")
    elif isinstance(obj, float):
        out.write(format_float(obj) if np.isfinite(obj) else "null")
    elif isinstance(obj, int):
        out.write(str(obj))
    elif obj is None:
        out.write("null")
    elif isinstance(obj, str):
        out.write(json.dumps(obj))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json_report(path, obj) -> None:
    """Serialize a report (dataclass or plain containers) to pretty JSON."""
    data = to_jsonable(obj)
    with open(path, "w") as fh:
        _dump(data, fh, 0)
        fh.write("\n")
