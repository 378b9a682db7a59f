"""Readers for the producer's CSV/JSON file formats.

Trajectory CSVs carry the header ``iter,loss,norm_loss,norm_dist,proj_x,
proj_y`` with empty fields for values that were not recorded; grid CSVs
carry ``x,y,p`` row-major over the slice. Every reader checks for the
columns it needs and raises :class:`SchemaError` naming the first missing
one, so broken pipelines fail loudly with the offending column.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import SchemaError, SpecError


def _open_checked(path):
    path = Path(path)
    if not path.is_file():
        raise SpecError(f"input file does not exist: {path}")
    return path


def read_trajectory_csv(path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Columns of one trajectory file; ``required`` columns must be filled."""
    path = _open_checked(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"empty trajectory file: {path}") from None
        for column in required:
            if column not in header:
                raise SchemaError(f"missing column '{column}' in {path}", column=column)
        index = {name: header.index(name) for name in header}
        columns: dict[str, list[float]] = {name: [] for name in header}
        for row in reader:
            for name, pos in index.items():
                text = row[pos] if pos < len(row) else ""
                columns[name].append(math.nan if text == "" else float(text))
    for column in required:
        values = columns[column]
        if not values or any(math.isnan(v) for v in values):
            raise SchemaError(f"missing column '{column}' in {path}: no recorded values",
                              column=column)
    return {name: np.asarray(values) for name, values in columns.items()}


def read_grid_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slice grid as (xs, ys, values) with ``values[i, j] = p(xs[i], ys[j])``."""
    path = _open_checked(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"empty grid file: {path}") from None
        for column in ("x", "y", "p"):
            if column not in header:
                raise SchemaError(f"missing column '{column}' in {path}", column=column)
        ix, iy, ip = header.index("x"), header.index("y"), header.index("p")
        rows = [(float(r[ix]), float(r[iy]), float(r[ip])) for r in reader]
    if not rows:
        raise SchemaError(f"grid file has no rows: {path}")
    ys = []
    for _, y, _ in rows:
        if y in ys:
            break
        ys.append(y)
    ny = len(ys)
    if ny == 0 or len(rows) % ny != 0:
        raise SchemaError(f"grid rows are not row-major rectangular in {path}")
    nx = len(rows) // ny
    xs = [rows[i * ny][0] for i in range(nx)]
    values = np.array([p for _, _, p in rows]).reshape(nx, ny)
    return np.asarray(xs), np.asarray(ys), values


def read_json(path) -> dict:
    path = _open_checked(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecError(f"not valid JSON: {path}: {exc}") from exc


def read_verdicts(path) -> dict:
    """Escape-experiment report; needs multipliers, cells, trajectory files."""
    doc = read_json(path)
    for field in ("eta_multipliers", "cells", "trajectory_files"):
        if field not in doc:
            raise SchemaError(f"missing field '{field}' in {path}", column=field)
    return doc
