"""Exact probability tables over small discrete networks.

Substantive variables are binary. In an observable law every incomplete
variable gets a third level, ``MISSING``, which it takes exactly when its
indicator is 1.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .graph import MDag, Node, NodeKind

MISSING = 2
POSITIVITY_EPS = 1e-12


class PositivityError(ArithmeticError):
    """A conditioning event has (numerically) zero probability."""


def _fmt_event(event):
    return ", ".join(f"{k}={v}" for k, v in event.items()) or "<empty>"


class TabularLaw:
    """Dense joint table. ``probs`` has one axis per variable."""

    def __init__(self, variables, probs, check=True):
        self.variables = tuple(variables)
        self.probs = np.asarray(probs, dtype=float)
        if self.probs.ndim != len(self.variables):
            raise ValueError("one table axis per variable is required")
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("duplicate variable names")
        self._axis = {v: i for i, v in enumerate(self.variables)}
        if check:
            if np.any(self.probs < -1e-15):
                raise ValueError("negative probability in table")
            if abs(self.probs.sum() - 1.0) > 1e-12:
                raise ValueError(f"table sums to {self.probs.sum()!r}, not 1")

    @property
    def cards(self) -> dict:
        return dict(zip(self.variables, self.probs.shape))

    def _index(self, event):
        idx = [slice(None)] * len(self.variables)
        for v, val in event.items():
            if v not in self._axis:
                raise KeyError(f"unknown variable {v!r}")
            idx[self._axis[v]] = val
        return tuple(idx)

    def prob(self, event: Mapping) -> float:
        return float(self.probs[self._index(event)].sum())

    def cond(self, target: Mapping, given: Mapping) -> float:
        for v in target:
            if v in given and given[v] != target[v]:
                return 0.0
        den = self.prob(given)
        if den < POSITIVITY_EPS:
            raise PositivityError(f"P({_fmt_event(given)}) = {den:.3g} is not positive")
        return self.prob({**given, **target}) / den

    def marginal(self, keep) -> "TabularLaw":
        keep = tuple(keep)
        drop = tuple(i for i, v in enumerate(self.variables) if v not in keep)
        p = self.probs.sum(axis=drop) if drop else self.probs
        kept = [v for v in self.variables if v in keep]
        p = np.moveaxis(p, [kept.index(v) for v in keep], range(len(keep)))
        return TabularLaw(keep, p, check=False)

    def condition(self, given: Mapping) -> "TabularLaw":
        """Law of the remaining variables given an event."""
        den = self.prob(given)
        if den < POSITIVITY_EPS:
            raise PositivityError(f"P({_fmt_event(given)}) = {den:.3g} is not positive")
        rest = [v for v in self.variables if v not in given]
        return TabularLaw(rest, self.probs[self._index(given)] / den, check=False)

    def reorder(self, variables) -> "TabularLaw":
        variables = tuple(variables)
        if set(variables) != set(self.variables):
            raise ValueError("reorder needs the same variable set")
        axes = [self._axis[v] for v in variables]
        return TabularLaw(variables, np.transpose(self.probs, axes), check=False)

    def max_abs_diff(self, other: "TabularLaw") -> float:
        if set(self.variables) != set(other.variables):
            raise ValueError("laws are over different variables")
        o = other.reorder(self.variables).probs
        if o.shape != self.probs.shape:
            raise ValueError("laws have different cardinalities")
        return float(np.max(np.abs(self.probs - o)))

    def __repr__(self):
        return f"TabularLaw({', '.join(self.variables)})"


@dataclass(frozen=True)
class InterventionQuery:
    outcome: str
    exposure: str
    value: int
    outcome_value: int = 1

    def __post_init__(self):
        if self.outcome == self.exposure:
            raise ValueError("outcome and exposure must differ")


class StructuralModel:
    """Binary causal network over an m-DAG.

    ``cpts[v]`` holds P(v = 1 | parents) as an array with one axis per parent,
    parents in ``parent_order(v)`` (graph insertion order).
    """

    def __init__(self, graph: MDag, cpts: Mapping[str, np.ndarray]):
        self.graph = graph
        self.cpts = {}
        for v in graph.names:
            if v not in cpts:
                raise ValueError(f"missing CPT for {v}")
            t = np.asarray(cpts[v], dtype=float)
            k = len(self.parent_order(v))
            if t.shape != (2,) * k:
                raise ValueError(f"CPT for {v} has shape {t.shape}, expected {(2,) * k}")
            if np.any(t < 0) or np.any(t > 1):
                raise ValueError(f"CPT for {v} has entries outside [0, 1]")
            self.cpts[v] = t
        extra = set(cpts) - set(graph.names)
        if extra:
            raise ValueError(f"CPTs given for unknown nodes {sorted(extra)}")

    def parent_order(self, v) -> tuple:
        pa = self.graph.parents(v)
        return tuple(n for n in self.graph.names if n in pa)

    @classmethod
    def random(cls, graph: MDag, rng, low=0.05, high=0.95) -> "StructuralModel":
        cpts = {}
        for v in graph.names:
            k = len(graph.parents(v))
            cpts[v] = rng.uniform(low, high, size=(2,) * k)
        return cls(graph, cpts)

    def replace(self, **cpts) -> "StructuralModel":
        return StructuralModel(self.graph, {**self.cpts, **cpts})

    def joint(self, do: Mapping | None = None) -> TabularLaw:
        """Full joint over every node; ``do`` clamps nodes (truncated factorization)."""
        do = dict(do or {})
        names = self.graph.names
        pos = {v: i for i, v in enumerate(names)}
        p = np.ones((2,) * len(names))
        for v in names:
            pa = self.parent_order(v)
            if v in do:
                fac = np.zeros(2)
                fac[do[v]] = 1.0
                axes = [pos[v]]
            else:
                p1 = self.cpts[v]
                fac = np.stack([1.0 - p1, p1], axis=-1)
                axes = [pos[u] for u in pa] + [pos[v]]
            shape = [1] * len(names)
            # bring factor axes into global position order
            order = np.argsort(axes)
            fac = np.transpose(fac, order)
            for a in sorted(axes):
                shape[a] = 2
            p = p * fac.reshape(shape)
        return TabularLaw(names, p)

    # -- JSON ------------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"name": n.name, "kind": n.kind.value, **({"of": n.subject} if n.subject else {})}
                for n in self.graph.nodes.values()
            ],
            "edges": [list(e) for e in sorted(self.graph.edges)],
            "cpts": {
                v: {"parents": list(self.parent_order(v)), "p1": self.cpts[v].tolist()}
                for v in self.graph.names
            },
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d) -> "StructuralModel":
        nodes = [
            Node(n["name"], NodeKind(n.get("kind", "substantive")), n.get("of"))
            for n in d["nodes"]
        ]
        g = MDag(nodes, [tuple(e) for e in d["edges"]])
        cpts = {}
        for v, spec in d["cpts"].items():
            if v not in g.nodes:
                raise ValueError(f"CPT for unknown node {v!r}")
            given = list(spec.get("parents", []))
            expected = [n for n in g.names if n in g.parents(v)]
            if sorted(given) != sorted(expected):
                raise ValueError(f"CPT parents of {v} {given} do not match graph {expected}")
            t = np.asarray(spec["p1"], dtype=float)
            if given != expected:
                t = np.transpose(t, [given.index(u) for u in expected])
            cpts[v] = t
        return cls(g, cpts)

    @classmethod
    def from_json(cls, text: str) -> "StructuralModel":
        return cls.from_dict(json.loads(text))


def observable_law(m: StructuralModel) -> TabularLaw:
    """Law of what an analyst sees: latents summed out, incomplete variables
    coded 0/1/MISSING consistently with their indicators."""
    g = m.graph
    law = m.joint()
    keep = [v for v in g.names if g.kind(v) is not NodeKind.LATENT]
    law = law.marginal(keep)
    p = law.probs
    variables = list(law.variables)
    for v, mv in g.proxy.items():
        i, j = variables.index(v), variables.index(mv)
        a = np.moveaxis(p, [i, j], [-2, -1])
        out = np.zeros(a.shape[:-2] + (3, 2))
        out[..., 0, 0] = a[..., 0, 0]
        out[..., 1, 0] = a[..., 1, 0]
        out[..., MISSING, 1] = a[..., 0, 1] + a[..., 1, 1]
        p = np.moveaxis(out, [-2, -1], [i, j])
    return TabularLaw(variables, p)


def _check_positivity_for_do(m: StructuralModel, exposure, value):
    pa = m.parent_order(exposure)
    if not pa:
        if (m.cpts[exposure] if value == 1 else 1 - m.cpts[exposure]) < POSITIVITY_EPS:
            raise PositivityError(f"P({exposure}={value}) is zero")
        return
    marg = m.joint().marginal(pa).probs
    px = m.cpts[exposure] if value == 1 else 1.0 - m.cpts[exposure]
    bad = (marg > POSITIVITY_EPS) & (px < POSITIVITY_EPS)
    if np.any(bad):
        cfg = dict(zip(pa, map(int, np.argwhere(bad)[0])))
        raise PositivityError(
            f"P({exposure}={value} | {_fmt_event(cfg)}) is zero for a reachable parent configuration"
        )


def true_potential_outcome(m: StructuralModel, q: InterventionQuery) -> float:
    """P(outcome = q.outcome_value | do(exposure = q.value)), exactly."""
    for v in (q.outcome, q.exposure):
        if v not in m.graph.nodes or m.graph.kind(v) is not NodeKind.SUBSTANTIVE:
            raise ValueError(f"{v!r} is not a substantive node of the model")
    _check_positivity_for_do(m, q.exposure, q.value)
    return m.joint(do={q.exposure: q.value}).prob({q.outcome: q.outcome_value})


def true_ace(m: StructuralModel, exposure="X", outcome="Y") -> float:
    return true_potential_outcome(m, InterventionQuery(outcome, exposure, 1)) - (
        true_potential_outcome(m, InterventionQuery(outcome, exposure, 0))
    )


def assignments(variables):
    """All 0/1 assignments of ``variables`` as dicts."""
    variables = tuple(variables)
    for vals in itertools.product((0, 1), repeat=len(variables)):
        yield dict(zip(variables, vals))
