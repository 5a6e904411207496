"""CSV and JSON formats for point clouds, node fields and solve reports.

Point-cloud CSV has header ``x0,...,x{d-1}[,boundary]``; field CSV has header
``id,x0,...,x{d-1},value``.  Floats are written with 17 significant digits so
a write/read/write cycle is byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


class FormatError(ValueError):
    pass


def _fmt(x):
    return FLOAT_FMT % float(x)


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    return header, rows


def _coord_columns(header, path):
    coords = [h for h in header if h.startswith("x") and h[1:].isdigit()]
    if not coords or coords != [f"x{i}" for i in range(len(coords))]:
        raise FormatError(f"{path}: expected coordinate columns x0..x{{d-1}}, got {header}")
    return coords


def write_cloud_csv(path, points, boundary=None):
    """Write ``(n, d)`` points and an optional 0/1 boundary column."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = points.shape[1]
    header = [f"x{i}" for i in range(d)]
    if boundary is not None:
        boundary = np.asarray(boundary, dtype=bool)
        if boundary.shape != (len(points),):
            raise FormatError("boundary column length does not match points")
        header.append("boundary")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i, row in enumerate(points):
            cells = [_fmt(v) for v in row]
            if boundary is not None:
                cells.append("1" if boundary[i] else "0")
            fh.write(",".join(cells) + "\n")


def read_cloud_csv(path):
    """Returns ``(points, boundary)``; ``boundary`` is ``None`` when the column is absent."""
    header, rows = _read_rows(path)
    coords = _coord_columns(header, path)
    d = len(coords)
    has_b = "boundary" in header
    expected = coords + (["boundary"] if has_b else [])
    if header != expected:
        raise FormatError(f"{path}: unexpected header {header}")
    if not rows:
        raise FormatError(f"{path}: no rows")
    try:
        arr = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if arr.shape[1] != len(header):
        raise FormatError(f"{path}: ragged rows")
    pts = arr[:, :d]
    bnd = None
    if has_b:
        col = arr[:, d]
        if not np.all((col == 0) | (col == 1)):
            raise FormatError(f"{path}: boundary column must be 0 or 1")
        bnd = col.astype(bool)
    return pts, bnd


def write_field_csv(path, points, values, ids=None):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float)
    if values.shape != (len(points),):
        raise FormatError("field length does not match points")
    ids = np.arange(len(points)) if ids is None else np.asarray(ids, dtype=int)
    d = points.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["id"] + [f"x{i}" for i in range(d)] + ["value"]) + "\n")
        for i in range(len(points)):
            cells = [str(int(ids[i]))] + [_fmt(v) for v in points[i]] + [_fmt(values[i])]
            fh.write(",".join(cells) + "\n")


def read_field_csv(path):
    """Returns ``(ids, points, values)``."""
    header, rows = _read_rows(path)
    if len(header) < 3 or header[0] != "id" or header[-1] != "value":
        raise FormatError(f"{path}: expected header id,x0,...,value, got {header}")
    _coord_columns(header[1:-1], path)
    if not rows:
        raise FormatError(f"{path}: no rows")
    try:
        ids = np.array([int(r[0]) for r in rows])
        arr = np.array([[float(c) for c in r[1:]] for r in rows])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if arr.shape[1] != len(header) - 1:
        raise FormatError(f"{path}: ragged rows")
    return ids, arr[:, :-1], arr[:, -1]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
