"""Observed-data containers, CSV ingestion and fold assignment.

A unit is recorded as ``O = (X, A, C, (1 - C) Y)``: covariates, a binary
treatment, a binary censoring flag and an outcome in ``[0, 1]`` that is
present exactly when the unit is uncensored.  Censored outcomes are held as
``NaN`` in memory and as an empty field on disk.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DataValidationError",
    "Observation",
    "Dataset",
    "FoldAssignment",
    "load_dataset",
    "save_dataset",
    "split_folds",
    "atomic_write_text",
]


class DataValidationError(ValueError):
    """Raised when input data violate the observed-data schema."""


@dataclass(frozen=True)
class Observation:
    x: tuple[float, ...]
    a: int
    c: int
    y: float | None

    def __post_init__(self):
        if self.a not in (0, 1):
            raise DataValidationError(f"treatment must be 0 or 1, got {self.a!r}")
        if self.c not in (0, 1):
            raise DataValidationError(f"censoring flag must be 0 or 1, got {self.c!r}")
        if self.c == 1 and self.y is not None:
            raise DataValidationError("outcome present for censored unit")
        if self.c == 0:
            if self.y is None:
                raise DataValidationError("outcome missing for uncensored unit")
            if not (0.0 <= self.y <= 1.0):
                raise DataValidationError(f"outcome {self.y!r} outside [0, 1]")


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


class Dataset:
    """Immutable column store of observations.

    Parameters
    ----------
    x : array-like of shape (n, p)
    a, c : array-like of shape (n,)
        Binary treatment and censoring indicators.
    y : array-like of shape (n,)
        Outcomes; ``NaN`` (or ``None``) where ``c == 1``.
    covariate_names : sequence of str, optional
        Defaults to ``x1 .. xp``.
    """

    def __init__(self, x, a, c, y, covariate_names: Sequence[str] | None = None):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise DataValidationError("covariates must be a 2-D array")
        n, p = x.shape
        a = np.asarray(a)
        c = np.asarray(c)
        if isinstance(y, np.ndarray):
            y = y.astype(float)
        else:
            y = np.array([np.nan if v is None else v for v in y], dtype=float)
        if n < 1:
            raise DataValidationError("dataset must contain at least one unit")
        if not (a.shape == c.shape == y.shape == (n,)):
            raise DataValidationError("x, a, c and y must describe the same number of units")
        if not np.all(np.isfinite(x)):
            raise DataValidationError("covariates must be finite")
        for name, v in (("a", a), ("c", c)):
            bad = ~np.isin(v, (0, 1))
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise DataValidationError(f"non-binary {name} at row {i + 1}")
        a = a.astype(np.int8)
        c = c.astype(np.int8)
        present = ~np.isnan(y)
        wrong = present & (c == 1)
        if wrong.any():
            raise DataValidationError(
                f"outcome present for censored unit, row {int(np.flatnonzero(wrong)[0]) + 1}"
            )
        wrong = ~present & (c == 0)
        if wrong.any():
            raise DataValidationError(
                f"outcome absent for uncensored unit, row {int(np.flatnonzero(wrong)[0]) + 1}"
            )
        wrong = present & ((y < 0) | (y > 1))
        if wrong.any():
            raise DataValidationError(
                f"outcome outside [0, 1], row {int(np.flatnonzero(wrong)[0]) + 1}"
            )
        if covariate_names is None:
            covariate_names = [f"x{j + 1}" for j in range(p)]
        covariate_names = list(covariate_names)
        if len(covariate_names) != p:
            raise DataValidationError("covariate_names length does not match covariate dimension")
        self._x = _frozen(x, float)
        self._a = _frozen(a, np.int8)
        self._c = _frozen(c, np.int8)
        self._y = _frozen(y, float)
        self._names = tuple(covariate_names)

    x = property(lambda self: self._x)
    a = property(lambda self: self._a)
    c = property(lambda self: self._c)
    y = property(lambda self: self._y)
    covariate_names = property(lambda self: list(self._names))

    @property
    def n(self) -> int:
        return self._x.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def y_filled(self) -> np.ndarray:
        """Outcome with censored entries replaced by 0 (they are always multiplied by 1 - C)."""
        return np.where(self._c == 0, self._y, 0.0)

    @property
    def observations(self) -> list[Observation]:
        return [self[i] for i in range(self.n)]

    def __getitem__(self, i: int) -> Observation:
        y = None if self._c[i] == 1 else float(self._y[i])
        return Observation(tuple(float(v) for v in self._x[i]), int(self._a[i]), int(self._c[i]), y)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self._x[idx], self._a[idx], self._c[idx], self._y[idx], self._names)

    @classmethod
    def from_observations(cls, observations: Sequence[Observation], covariate_names=None) -> "Dataset":
        if not observations:
            raise DataValidationError("dataset must contain at least one unit")
        dims = {len(o.x) for o in observations}
        if len(dims) != 1:
            raise DataValidationError("observations have unequal covariate dimension")
        return cls(
            [o.x for o in observations],
            [o.a for o in observations],
            [o.c for o in observations],
            [np.nan if o.y is None else o.y for o in observations],
            covariate_names,
        )

    def check_estimable(self) -> None:
        """Both arms present with at least one uncensored unit each."""
        for arm in (0, 1):
            in_arm = self._a == arm
            if not in_arm.any():
                raise DataValidationError(f"no units in treatment arm {arm}")
            if not (in_arm & (self._c == 0)).any():
                raise DataValidationError(f"no uncensored units in treatment arm {arm}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self._names == other._names
            and np.array_equal(self._x, other._x)
            and np.array_equal(self._a, other._a)
            and np.array_equal(self._c, other._c)
            and np.array_equal(self._y, other._y, equal_nan=True)
        )

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, p={self._x.shape[1]}, censored={int(self._c.sum())})"


def _parse_float(text: str, row: int, field: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataValidationError(f"malformed {field} {text!r}, row {row}") from None
    if not math.isfinite(value):
        raise DataValidationError(f"non-finite {field}, row {row}")
    return value


def _parse_binary(text: str, row: int, field: str) -> int:
    if text.strip() not in ("0", "1"):
        raise DataValidationError(f"non-binary {field} {text!r}, row {row}")
    return int(text)


def load_dataset(path) -> Dataset:
    """Read a CSV file with header ``y,a,c,x1,...,xp``.

    Rows are numbered from 1 (the first line after the header) in error
    messages.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError("empty file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["y", "a", "c"] or len(header) < 4:
            raise DataValidationError("header must start with y,a,c followed by at least one covariate")
        names = header[3:]
        p = len(names)
        xs, as_, cs, ys = [], [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 3 + p:
                raise DataValidationError(f"expected {3 + p} fields, got {len(row)}, row {row_no}")
            a = _parse_binary(row[1], row_no, "a")
            c = _parse_binary(row[2], row_no, "c")
            y_text = row[0].strip()
            if c == 1 and y_text:
                raise DataValidationError(f"outcome present for censored unit, row {row_no}")
            if c == 0 and not y_text:
                raise DataValidationError(f"outcome absent for uncensored unit, row {row_no}")
            y = _parse_float(y_text, row_no, "y") if y_text else math.nan
            if c == 0 and not 0.0 <= y <= 1.0:
                raise DataValidationError(f"outcome outside [0, 1], row {row_no}")
            xs.append([_parse_float(v, row_no, names[j]) for j, v in enumerate(row[3:])])
            as_.append(a)
            cs.append(c)
            ys.append(y)
    if not xs:
        raise DataValidationError("file contains no observations")
    return Dataset(np.array(xs, dtype=float).reshape(-1, p), as_, cs, np.array(ys), names)


def _dataset_csv(d: Dataset) -> str:
    lines = [",".join(["y", "a", "c", *d.covariate_names])]
    for i in range(d.n):
        y = "" if d.c[i] == 1 else repr(float(d.y[i]))
        xs = ",".join(repr(float(v)) for v in d.x[i])
        lines.append(f"{y},{int(d.a[i])},{int(d.c[i])},{xs}")
    return "\n".join(lines) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def save_dataset(d: Dataset, path) -> None:
    # repr() gives the shortest string that round-trips a float exactly
    atomic_write_text(path, _dataset_csv(d))


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    k: int
    seed: int

    def __post_init__(self):
        self.fold_of.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.fold_of)

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.k)


def split_folds(n: int, k: int = 2, seed: int = 0) -> FoldAssignment:
    """Seeded shuffle of ``range(n)`` followed by round-robin fold labels."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"cannot split {n} units into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % k
    return FoldAssignment(fold_of, k, int(seed))
