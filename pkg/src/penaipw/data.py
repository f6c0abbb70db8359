"""Dataset container, CSV ingestion, rare-binary filter and z-scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary"


class DataError(ValueError):
    """Raised when input data violates the dataset contract."""


@dataclass(frozen=True)
class Dataset:
    """Covariates, binary treatment and continuous outcome for ``n`` units.

    Parameters
    ----------
    x : ndarray, shape (n, p)
        Covariate matrix.
    z : ndarray, shape (n,)
        Treatment indicator, 1 = treated and 0 = control.
    y : ndarray, shape (n,)
        Outcome.
    col_names : tuple of str
        Covariate labels, length ``p``.
    col_kinds : tuple of str
        ``"continuous"`` or ``"binary"`` per covariate.
    """

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    col_names: tuple = ()
    col_kinds: tuple = ()
    n_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        z = np.asarray(self.z, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        n, p = x.shape
        if n < 2:
            raise DataError("a dataset needs at least 2 rows")
        if len(z) != n or len(y) != n:
            raise DataError(f"row mismatch: x has {n} rows, z {len(z)}, y {len(y)}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z)) and np.all(np.isfinite(y))):
            raise DataError("non-finite values in x, z or y")
        if not np.all((z == 0) | (z == 1)):
            raise DataError("treatment not binary")
        names = tuple(self.col_names) if self.col_names else tuple(f"x{j + 1}" for j in range(p))
        kinds = tuple(self.col_kinds) if self.col_kinds else tuple(infer_kinds(x))
        if len(names) != p or len(kinds) != p:
            raise DataError("col_names/col_kinds length must equal the number of columns")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "col_names", names)
        object.__setattr__(self, "col_kinds", kinds)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def check_arms(self, min_size: int = 1):
        n1 = int(self.z.sum())
        n0 = self.n - n1
        if n1 < min_size or n0 < min_size:
            raise DataError(f"each arm needs at least {min_size} rows (treated={n1}, control={n0})")

    def subset_rows(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.z[idx], self.y[idx], self.col_names, self.col_kinds)

    def subset_cols(self, cols) -> "Dataset":
        cols = list(cols)
        return Dataset(
            self.x[:, cols].reshape(self.n, len(cols)),
            self.z,
            self.y,
            tuple(self.col_names[j] for j in cols),
            tuple(self.col_kinds[j] for j in cols),
            self.n_dropped,
        )

    def with_x(self, x) -> "Dataset":
        return Dataset(x, self.z, self.y, self.col_names, self.col_kinds, self.n_dropped)


@dataclass(frozen=True)
class StandardizationParams:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.sd

    def invert(self, xs):
        return np.asarray(xs, dtype=float) * self.sd + self.mean


def infer_kinds(x) -> list:
    kinds = []
    for col in np.asarray(x, dtype=float).T:
        kinds.append(BINARY if len(np.unique(col)) == 2 else CONTINUOUS)
    return kinds


def load_csv(path, outcome_col: str, treatment_col: str,
             covariate_cols: Sequence[str] | str = "all") -> Dataset:
    """Read a dataset from a CSV file with a header row.

    Rows with a missing outcome are dropped and counted in ``n_dropped``.
    Missing values anywhere else are an error. ``covariate_cols="all"`` takes
    every column other than the outcome and treatment, in file order.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        frame = pd.read_csv(path, na_values=["NA"], keep_default_na=True, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"empty data: {path}") from exc
    for col in (outcome_col, treatment_col):
        if col not in frame.columns:
            raise DataError(f"missing column: {col!r}")
    if isinstance(covariate_cols, str):
        if covariate_cols != "all":
            raise DataError("covariate_cols must be a list of names or 'all'")
        covariate_cols = [c for c in frame.columns if c not in (outcome_col, treatment_col)]
    else:
        covariate_cols = list(covariate_cols)
        missing = [c for c in covariate_cols if c not in frame.columns]
        if missing:
            raise DataError(f"missing column: {missing[0]!r}")
    if frame.empty:
        raise DataError(f"empty data: {path}")

    keep = frame[outcome_col].notna().to_numpy()
    n_dropped = int((~keep).sum())
    if n_dropped:
        logger.info("%d row%s dropped (missing outcome)", n_dropped, "" if n_dropped == 1 else "s")
    frame = frame.loc[keep]
    if frame.empty:
        raise DataError("empty data after dropping rows with missing outcome")

    sub = frame[[treatment_col] + covariate_cols]
    if sub.isna().to_numpy().any():
        bad = [c for c in sub.columns if sub[c].isna().any()]
        raise DataError(f"missing values in column {bad[0]!r} (imputation is not supported)")
    try:
        z = pd.to_numeric(frame[treatment_col]).to_numpy(dtype=float)
        y = pd.to_numeric(frame[outcome_col]).to_numpy(dtype=float)
        x = frame[covariate_cols].apply(pd.to_numeric).to_numpy(dtype=float)
    except (ValueError, TypeError) as exc:
        raise DataError(f"non-numeric data: {exc}") from exc
    if not np.all((z == 0) | (z == 1)):
        raise DataError("treatment not binary")
    x = x.reshape(len(y), len(covariate_cols))
    return Dataset(x, z, y, tuple(covariate_cols), tuple(infer_kinds(x)), n_dropped=n_dropped)


def filter_rare_binaries(d: Dataset, min_minority_prop: float = 0.005):
    """Drop binary covariates whose minority category is rarer than the cutoff.

    The comparison is strict, so a proportion exactly equal to
    ``min_minority_prop`` is kept. Returns the filtered dataset and the list
    of removed column names.
    """
    keep, removed = [], []
    for j, kind in enumerate(d.col_kinds):
        if kind == BINARY:
            _, counts = np.unique(d.x[:, j], return_counts=True)
            if counts.min() / d.n < min_minority_prop:
                removed.append(d.col_names[j])
                continue
        keep.append(j)
    if not removed:
        return d, removed
    return d.subset_cols(keep), removed


def standardize_matrix(x):
    """Column means and population standard deviations (denominator n)."""
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    return mean, sd


def standardize(d: Dataset):
    """Return the z-scored covariate matrix of ``d`` and its parameters.

    Raises
    ------
    DataError
        If a covariate column is constant.
    """
    mean, sd = standardize_matrix(d.x)
    const = np.flatnonzero(sd <= 0)
    if len(const):
        raise DataError(f"constant column {d.col_names[const[0]]!r} cannot be standardized")
    params = StandardizationParams(mean, sd)
    return params.apply(d.x), params


def drop_constant_columns(d: Dataset):
    sd = d.x.std(axis=0)
    const = np.flatnonzero(sd <= 0)
    if not len(const):
        return d, []
    keep = np.flatnonzero(sd > 0)
    return d.subset_cols(keep), [d.col_names[j] for j in const]
