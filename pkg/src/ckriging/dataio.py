"""CSV ingestion and emission for datasets.

Files are plain numeric CSV with a header row.  No imputation: a single
bad cell is reported with its row and column and aborts the load.
"""

from __future__ import annotations

import csv
import os
from typing import Optional, Sequence

import numpy as np

from .exceptions import InputError, ParameterError
from .gp import Dataset

__all__ = ["load_csv", "write_dataset_csv"]


def load_csv(path, target_column: Optional[str] = None) -> Dataset:
    """Read a dataset from CSV; the target defaults to the last column.

    Features are all non-target columns in file order.
    """
    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if target_column is None:
            target_column = header[-1]
        if target_column not in header:
            raise ParameterError(f"{path}: target column {target_column!r} not found "
                                 f"(columns: {header})")
        t_idx = header.index(target_column)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}: row {line_no} has {len(row)} cells, "
                                 f"expected {len(header)}")
            parsed = []
            for j, cell in enumerate(row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise InputError(
                        f"{path}: non-numeric value {cell!r} at row {line_no}, "
                        f"column {header[j]!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise InputError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    mask = np.ones(len(header), dtype=bool)
    mask[t_idx] = False
    return Dataset(data[:, mask], data[:, t_idx])


def write_dataset_csv(data: Dataset, path, feature_names: Optional[Sequence[str]] = None,
                      target_name: str = "y") -> None:
    """Write a dataset as CSV with full float precision."""
    if feature_names is None:
        feature_names = [f"x{i + 1}" for i in range(data.d)]
    if len(feature_names) != data.d:
        raise ParameterError(f"{len(feature_names)} feature names for {data.d} columns")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(feature_names) + [target_name])
        for x, t in zip(data.X, data.y):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(t))])
