"""Plain-text file formats.

* matrices: headerless row-major CSV, 17 significant digits per entry;
* triplets: CSV with header ``i,j,k,y`` (0-based indices, ``y`` in {-1, 1}),
  or ``i,j,k`` when no responses are attached;
* feature tables: numeric CSV, optionally with one header row.
"""

from __future__ import annotations

import csv
import math
import warnings
from pathlib import Path

import numpy as np

from .exceptions import ParseError
from .simulate import TripletBatch

__all__ = [
    "ingest_csv",
    "write_matrix_csv",
    "read_matrix_csv",
    "write_triplets_csv",
    "read_triplets_csv",
]


def ingest_csv(path, has_header: bool = False) -> np.ndarray:
    """Read a rectangular numeric table, one individual per row.

    Raises :class:`ParseError` naming the 1-based line and column of the first
    ragged row, non-numeric cell or non-finite value.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: file not found")
    rows = []
    width = None
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric value {cell!r} at line {lineno}, column {col}"
                    ) from None
                if not math.isfinite(v):
                    raise ParseError(f"{path}: non-finite value {cell!r} at line {lineno}, column {col}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def write_matrix_csv(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    np.savetxt(path, M, delimiter=",", fmt="%.17g")


def read_matrix_csv(path) -> np.ndarray:
    return ingest_csv(path, has_header=False)


def write_triplets_csv(path, triplets, y=None) -> None:
    """Write triplets (and responses, if given) with a header row."""
    if isinstance(triplets, TripletBatch):
        triplets, y = triplets.triplets, triplets.y
    T = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    if y is None:
        np.savetxt(path, T, delimiter=",", fmt="%d", header="i,j,k", comments="")
    else:
        data = np.column_stack([T, np.asarray(y, dtype=np.int64)])
        np.savetxt(path, data, delimiter=",", fmt="%d", header="i,j,k,y", comments="")


def read_triplets_csv(path, n: int | None = None):
    """Read a triplet file.

    Returns a :class:`TripletBatch` for ``i,j,k,y`` files and a bare
    ``(m, 3)`` array for ``i,j,k`` files. ``n`` defaults to the largest index
    plus one.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: file not found")
    with path.open() as fh:
        header = fh.readline().strip().replace(" ", "")
    if header not in ("i,j,k,y", "i,j,k"):
        raise ParseError(f"{path}: expected header 'i,j,k,y' or 'i,j,k', got {header!r}")
    width = len(header.split(","))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # header-only file
            data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if data.size == 0:
        data = np.empty((0, width), dtype=np.int64)
    if data.shape[1] != width:
        raise ParseError(f"{path}: expected {width} columns, got {data.shape[1]}")
    T = data[:, :3]
    if width == 3:
        return T
    if n is None:
        n = int(T.max()) + 1 if T.size else 3
    return TripletBatch(T, data[:, 3], n)
