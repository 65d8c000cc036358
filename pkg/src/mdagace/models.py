"""Regression specifications with main effects and product terms.

The formula language is deliberately tiny: ``"Y ~ C1 + X + X:C3"``. An
intercept is always included.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Family(str, Enum):
    GAUSSIAN = "LinearGaussian"
    BINOMIAL = "BinomialLogit"


class ModelSpecError(ValueError):
    pass


_TOKEN = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


def _term(t) -> tuple:
    """Canonical form of a product term: sorted tuple of column names."""
    if isinstance(t, str):
        parts = [p.strip() for p in t.split(":")]
    else:
        parts = list(t)
    for p in parts:
        if not _TOKEN.match(p):
            raise ModelSpecError(f"bad column name {p!r} in term {t!r}")
    if len(set(parts)) != len(parts):
        raise ModelSpecError(f"term {t!r} repeats a column")
    return tuple(sorted(parts))


def term_label(term: tuple) -> str:
    return ":".join(term)


@dataclass(frozen=True)
class ModelSpec:
    response: str
    terms: tuple = ()
    family: Family = Family.GAUSSIAN
    _canon: tuple = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        terms = tuple(_term(t) for t in self.terms)
        if len(set(terms)) != len(terms):
            dup = sorted({term_label(t) for t in terms if terms.count(t) > 1})
            raise ModelSpecError(f"duplicate terms {dup}")
        if any(self.response in t for t in terms):
            raise ModelSpecError(f"response {self.response} appears on the right-hand side")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "family", Family(self.family))

    @classmethod
    def parse(cls, formula: str, family=Family.GAUSSIAN) -> "ModelSpec":
        if formula.count("~") != 1:
            raise ModelSpecError(f"formula needs exactly one '~': {formula!r}")
        lhs, rhs = (s.strip() for s in formula.split("~"))
        if not _TOKEN.match(lhs):
            raise ModelSpecError(f"bad response {lhs!r}")
        rhs = rhs.strip()
        parts = [] if rhs in ("", "1") else [p.strip() for p in rhs.split("+")]
        if any(not p for p in parts):
            raise ModelSpecError(f"empty term in {formula!r}")
        parts = [p for p in parts if p != "1"]
        return cls(lhs, tuple(parts), family)

    @property
    def columns(self) -> list:
        """Distinct data columns used (response first)."""
        out = [self.response]
        for t in self.terms:
            for c in t:
                if c not in out:
                    out.append(c)
        return out

    @property
    def labels(self) -> list:
        return ["(Intercept)"] + [term_label(t) for t in self.terms]

    @property
    def p(self) -> int:
        return len(self.terms) + 1

    def has(self, term) -> bool:
        return _term(term) in self.terms

    def add(self, *terms) -> "ModelSpec":
        new = list(self.terms)
        for t in terms:
            t = _term(t)
            if t not in new and self.response not in t:
                new.append(t)
        return ModelSpec(self.response, tuple(new), self.family)

    def drop_containing(self, column) -> "ModelSpec":
        return ModelSpec(self.response, tuple(t for t in self.terms if column not in t), self.family)

    def with_response(self, response, family=None) -> "ModelSpec":
        return ModelSpec(response, tuple(t for t in self.terms if response not in t),
                         family or self.family)

    def formula(self) -> str:
        rhs = " + ".join(term_label(t) for t in self.terms) or "1"
        return f"{self.response} ~ {rhs}"

    def __str__(self):
        return self.formula()

    def check(self, data):
        missing = [c for c in self.columns if c not in data]
        if missing:
            raise ModelSpecError(f"columns {missing} not in data")

    def design(self, data, rows=None, override=None) -> np.ndarray:
        """Design matrix with intercept; ``override`` replaces columns (e.g. a
        forced exposure), and products are formed from the replaced values."""
        override = override or {}
        n = data.n if rows is None else int(np.sum(rows) if np.asarray(rows).dtype == bool else len(rows))

        def col(c):
            if c in override:
                v = override[c]
                return np.broadcast_to(v, (n,)) if np.ndim(v) == 0 else (v if rows is None else v[rows])
            v = data[c]
            return v if rows is None else v[rows]

        X = np.empty((n, self.p))
        X[:, 0] = 1.0
        for j, t in enumerate(self.terms, start=1):
            v = col(t[0]).astype(float, copy=True)
            for c in t[1:]:
                v *= col(c)
            X[:, j] = v
        return X

    def response_vector(self, data, rows=None) -> np.ndarray:
        y = data[self.response]
        return y if rows is None else y[rows]
