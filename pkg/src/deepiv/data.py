"""The IV dataset container and its CSV schema.

CSV layout: a header row naming ``y``, ``x1..xq``, ``z1..zd`` and optionally
``r1..rq2``; comma separated, '.' decimal, no missing values.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ShapeMismatch


def _as_2d(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeMismatch(f"{name} must be 1-d or 2-d, got ndim={a.ndim}")
    return a


@dataclass(frozen=True)
class Dataset:
    """Response ``y`` (n,), endogenous ``x`` (n, q), instruments ``z`` (n, d)
    and optional exogenous regressors ``r`` (n, q2)."""

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    r: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        x = _as_2d(self.x, "x")
        z = _as_2d(self.z, "z")
        r = None if self.r is None else _as_2d(self.r, "r")
        n = y.shape[0]
        if n < 1:
            raise DomainError("dataset is empty")
        for name, arr in (("x", x), ("z", z), ("r", r)):
            if arr is None:
                continue
            if arr.shape[0] != n:
                raise ShapeMismatch(f"{name} has {arr.shape[0]} rows, y has {n}")
            if arr.shape[1] < 1:
                raise ShapeMismatch(f"{name} has no columns")
        for name, arr in (("y", y), ("x", x), ("z", z), ("r", r)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "r", r)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def q(self) -> int:
        return self.x.shape[1]

    @property
    def d(self) -> int:
        return self.z.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        r = None if self.r is None else self.r[idx]
        return Dataset(self.y[idx], self.x[idx], self.z[idx], r)

    def with_instruments(self, z) -> "Dataset":
        return Dataset(self.y, self.x, z, self.r)


_COL = re.compile(r"^(x|z|r)(\d+)$")


def read_csv(path) -> Dataset:
    """Load a dataset from CSV.

    Raises
    ------
    DomainError
        On a missing ``y``/``x1``/``z1`` column, gaps in a numbered column
        family, empty cells or non-numeric values. The message names the
        offending column.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DomainError(f"{path}: empty file") from None
        rows = [row for row in reader if row and any(c.strip() for c in row)]

    families: dict[str, dict[int, int]] = {"x": {}, "z": {}, "r": {}}
    y_col = None
    for j, name in enumerate(header):
        if name == "y":
            y_col = j
            continue
        m = _COL.match(name)
        if m:
            families[m.group(1)][int(m.group(2))] = j
    if y_col is None:
        raise DomainError("missing required column 'y'")
    for fam in ("x", "z"):
        if not families[fam]:
            raise DomainError(f"missing required column '{fam}1'")
    for fam, cols in families.items():
        for k in range(1, len(cols) + 1):
            if k not in cols:
                raise DomainError(f"missing required column '{fam}{k}'")
    if not rows:
        raise DomainError(f"{path}: no data rows")

    values = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DomainError(f"row {i + 2}: expected {len(header)} fields, got {len(row)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                raise DomainError(f"row {i + 2}: missing value in column '{header[j]}'")
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DomainError(f"row {i + 2}: non-numeric value {cell!r} in column '{header[j]}'") from None

    def block(fam):
        cols = families[fam]
        return values[:, [cols[k] for k in range(1, len(cols) + 1)]] if cols else None

    return Dataset(values[:, y_col], block("x"), block("z"), block("r"))


def write_csv(data: Dataset, path) -> None:
    header = ["y"] + [f"x{k + 1}" for k in range(data.q)] + [f"z{k + 1}" for k in range(data.d)]
    blocks = [data.y[:, None], data.x, data.z]
    if data.r is not None:
        header += [f"r{k + 1}" for k in range(data.r.shape[1])]
        blocks.append(data.r)
    table = np.hstack(blocks)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([repr(float(v)) for v in row])
