"""Delimited-text datasets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mvgpr import TrainingSet


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetFile:
    """Where a dataset lives and which columns are inputs and outputs.

    Without a header row, columns are named by their 0-based position
    (``"0"``, ``"1"``, ...).
    """

    path: Path
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    delimiter: str = ","
    header: bool = True


def read_table(path, delimiter: str = ",", header: bool = True, columns=None) -> tuple[list[str], np.ndarray]:
    """Read selected columns as floats. Row numbers in errors count data rows from 1."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r and any(c.strip() for c in r)]
    if header:
        if not rows:
            raise DatasetError(f"{path}: file is empty")
        names, body = [c.strip() for c in rows[0]], rows[1:]
    else:
        body = rows
        names = [str(i) for i in range(len(body[0]))] if body else []
    if not body:
        raise DatasetError(f"{path}: no data rows")
    columns = list(names) if columns is None else [str(c) for c in columns]
    missing = [c for c in columns if c not in names]
    if missing:
        raise DatasetError(f"{path}: missing column(s) {', '.join(missing)}")
    idx = [names.index(c) for c in columns]
    out = np.empty((len(body), len(idx)))
    for r, row in enumerate(body):
        line = r + 2 if header else r + 1
        if len(row) != len(names):
            raise DatasetError(f"{path}: row {r + 1} (line {line}) has {len(row)} fields, expected {len(names)}")
        for c, j in enumerate(idx):
            cell = row[j].strip()
            try:
                value = float(cell)
            except ValueError:
                value = math.nan
            if not math.isfinite(value):
                raise DatasetError(
                    f"{path}: row {r + 1} (line {line}), column {columns[c]!r}: cannot parse {cell!r} as a finite number"
                )
            out[r, c] = value
    return columns, out


def parse_dataset(spec: DatasetFile) -> TrainingSet:
    if not spec.inputs or not spec.outputs:
        raise DatasetError("at least one input and one output column are required")
    _, table = read_table(spec.path, spec.delimiter, spec.header, list(spec.inputs) + list(spec.outputs))
    p = len(spec.inputs)
    return TrainingSet(table[:, :p], table[:, p:])


def write_dataset(data: TrainingSet, path, inputs=None, outputs=None, delimiter: str = ",") -> None:
    inputs = inputs or [f"x{i + 1}" for i in range(data.p)]
    outputs = outputs or [f"y{j + 1}" for j in range(data.d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(list(inputs) + list(outputs))
        for x, y in zip(data.X, data.Y):
            w.writerow([repr(float(v)) for v in (*x, *y)])
