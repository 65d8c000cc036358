"""Rectangular numeric data with explicit missing cells (NaN) and column roles."""

from __future__ import annotations

import csv
from typing import Mapping

import numpy as np

ROLES = ("exposure", "outcome", "confounder", "auxiliary", "indicator")
NA = "NA"
IND_SUFFIX = ".M"


class Dataset:
    def __init__(self, columns: Mapping[str, np.ndarray], roles: Mapping[str, str] | None = None):
        self.columns = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have different lengths {sorted(lengths)}")
        self.roles = dict(roles or {})
        for c, r in self.roles.items():
            if r not in ROLES:
                raise ValueError(f"unknown role {r!r} for column {c}")

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def names(self) -> list:
        return list(self.columns)

    def __getitem__(self, name) -> np.ndarray:
        return self.columns[name]

    def __contains__(self, name):
        return name in self.columns

    def copy(self) -> "Dataset":
        return Dataset({k: v.copy() for k, v in self.columns.items()}, self.roles)

    def with_columns(self, **cols) -> "Dataset":
        return Dataset({**self.columns, **cols}, self.roles)

    def subset(self, rows) -> "Dataset":
        return Dataset({k: v[rows] for k, v in self.columns.items()}, self.roles)

    def matrix(self, cols) -> np.ndarray:
        return np.column_stack([self.columns[c] for c in cols])

    def missing(self, col) -> np.ndarray:
        return np.isnan(self.columns[col])

    def complete_rows(self, cols=None) -> np.ndarray:
        cols = self.names if cols is None else cols
        ok = np.ones(self.n, dtype=bool)
        for c in cols:
            ok &= ~np.isnan(self.columns[c])
        return ok

    def incomplete_columns(self) -> list:
        return [c for c in self.names if np.isnan(self.columns[c]).any()]

    def by_role(self, role) -> list:
        return [c for c, r in self.roles.items() if r == role]

    # -- CSV -----------------------------------------------------------------
    def to_csv(self, path, indicators: bool = True):
        names = [c for c in self.names if self.roles.get(c) != "indicator"]
        header = list(names)
        miss_cols = [c for c in names if indicators and np.isnan(self.columns[c]).any()]
        header += [c + IND_SUFFIX for c in miss_cols]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.n):
                row = [_fmt(self.columns[c][i]) for c in names]
                row += [str(int(np.isnan(self.columns[c][i]))) for c in miss_cols]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, roles=None) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty file")
        header, body = rows[0], rows[1:]
        cols = {}
        for j, name in enumerate(header):
            vals = []
            for i, r in enumerate(body, start=2):
                if len(r) != len(header):
                    raise ValueError(f"{path}:{i}: expected {len(header)} fields, got {len(r)}")
                tok = r[j].strip()
                if tok in (NA, ""):
                    vals.append(np.nan)
                else:
                    try:
                        vals.append(float(tok))
                    except ValueError:
                        raise ValueError(f"{path}:{i}: non-numeric value {tok!r} in {name}") from None
            cols[name] = np.array(vals)
        roles = dict(roles or {})
        for name in header:
            if name.endswith(IND_SUFFIX):
                roles[name] = "indicator"
        return cls(cols, roles)


def _fmt(v):
    if np.isnan(v):
        return NA
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))
