"""File formats: CSV point sets, JSON documents and dense grids with a sidecar.

Every number is written in decimal with 17 significant digits, which is
enough to read back the exact binary value.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .density import DensityModel, SampleSet
from .errors import InputFormatError
from .kde import EvalGrid


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _to_json(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_to_json(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_to_json(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _to_json(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return _to_json(obj.tolist(), indent, level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return json.dumps(str(float(obj)))  # "inf", "-inf", "nan"
        return fmt(obj)
    return json.dumps(str(obj))


def dumps(obj, indent: int = 2) -> str:
    return _to_json(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputFormatError(f"cannot read JSON from {path}: {exc}") from exc


def write_csv(path, rows: np.ndarray, header: list[str]) -> None:
    rows = np.atleast_2d(np.asarray(rows, float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_points_csv(path) -> tuple[np.ndarray, list[str] | None]:
    """Numeric CSV with an optional header row."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise InputFormatError(f"{path} is empty")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = rows[0], rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise InputFormatError(f"non-numeric entry in {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[0] == 0 or len({len(r) for r in rows}) != 1:
        raise InputFormatError(f"{path} must hold a rectangular table with at least one row")
    if not np.all(np.isfinite(data)):
        raise InputFormatError(f"{path} contains non-finite values")
    return data, header


def read_sample(path) -> SampleSet:
    data, _ = read_points_csv(path)
    return SampleSet(data, None, str(path))


def write_sample(path, sample: SampleSet) -> None:
    write_csv(path, sample.points, [f"x{i + 1}" for i in range(sample.d)])


def read_model(path) -> DensityModel:
    data = read_json(path)
    try:
        return DensityModel.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputFormatError(f"invalid model file {path}: {exc}") from exc


def write_grid(prefix, grid: EvalGrid, fields: dict) -> tuple[Path, Path]:
    """Raw float64 row-major fields stacked in order, plus a JSON sidecar."""
    prefix = Path(prefix)
    names = list(fields)
    stack = np.stack([np.asarray(fields[k], dtype="<f8").reshape(grid.shape) for k in names])
    bin_path = prefix.with_suffix(".bin")
    side_path = prefix.with_suffix(".json")
    stack.tofile(bin_path)
    write_json(side_path, {**grid.to_dict(), "fields": names, "dtype": "float64-le", "order": "C"})
    return bin_path, side_path


def read_grid(prefix) -> tuple[EvalGrid, dict]:
    prefix = Path(prefix)
    meta = read_json(prefix.with_suffix(".json"))
    try:
        grid = EvalGrid(meta["origin"], meta["spacing"], tuple(meta["shape"]))
        names = meta["fields"]
    except (KeyError, ValueError) as exc:
        raise InputFormatError(f"bad grid sidecar: {exc}") from exc
    raw = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8")
    if raw.size != len(names) * grid.size:
        raise InputFormatError("grid file size does not match its sidecar")
    raw = raw.reshape((len(names),) + grid.shape)
    return grid, {k: raw[i] for i, k in enumerate(names)}
