"""Two-model non-identifiability certificates.

Two structural models over the same graph that induce the same observable law
but different causal effects show that the effect cannot be recovered from
observed data in that graph.
"""

from __future__ import annotations

import itertools
import json
from importlib.resources import files
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .catalog import build_canonical, build_dprime
from .graph import MDag
from .tabular import MISSING, InterventionQuery, StructuralModel, observable_law, true_ace


@dataclass(frozen=True)
class WitnessReport:
    observable_gap: float
    ace1: float
    ace2: float
    tol: float

    @property
    def ace_gap(self) -> float:
        return abs(self.ace1 - self.ace2)

    @property
    def is_witness(self) -> bool:
        return self.observable_gap <= self.tol and self.ace_gap > 10 * self.tol


def verify_witness_pair(m1: StructuralModel, m2: StructuralModel, q: InterventionQuery | None = None,
                        tol: float = 1e-9) -> WitnessReport:
    q = q or InterventionQuery("Y", "X", 1)
    if set(m1.graph.names) != set(m2.graph.names):
        raise ValueError("the two models are over different variable sets")
    if {frozenset(e) for e in m1.graph.edges} != {frozenset(e) for e in m2.graph.edges}:
        raise ValueError("the two models do not share a skeleton")
    gap = observable_law(m1).max_abs_diff(observable_law(m2))
    return WitnessReport(
        gap, true_ace(m1, q.exposure, q.outcome), true_ace(m2, q.exposure, q.outcome), tol
    )


# -- search --------------------------------------------------------------------


class _Param:
    """Flat logit parameterization of all CPT entries of a graph.

    The observable map is evaluated in batch: each joint cell is a product of
    one CPT entry per node, and each observable cell a fixed sum of joint cells.
    """

    def __init__(self, graph: MDag, exposure="X", outcome="Y"):
        self.graph = graph
        self.exposure, self.outcome = exposure, outcome
        names = graph.names
        pos = {v: i for i, v in enumerate(names)}
        self.shapes, self.offsets = {}, {}
        k = 0
        cells = np.array(list(itertools.product((0, 1), repeat=len(names))))
        self._entry, self._value = [], []
        for v in names:
            pa = [u for u in names if u in graph.parents(v)]
            self.shapes[v] = (2,) * len(pa)
            self.offsets[v] = k
            flat = np.zeros(len(cells), dtype=int)
            for u in pa:
                flat = flat * 2 + cells[:, pos[u]]
            self._entry.append(k + flat)
            self._value.append(cells[:, pos[v]])
            k += 2 ** len(pa)
        self.dim = k
        self._entry = np.array(self._entry)
        self._value = np.array(self._value, dtype=bool)
        # joint cell -> observable cell
        template = observable_law(StructuralModel.random(graph, np.random.default_rng(0)))
        obs_vars = template.variables
        proxy = graph.proxy
        coords = []
        for v in obs_vars:
            col = cells[:, pos[v]].copy()
            if v in proxy:
                col[cells[:, pos[proxy[v]]] == 1] = MISSING
            coords.append(col)
        self._obs_index = np.ravel_multi_index(coords, template.probs.shape)
        self._n_obs = template.probs.size

    def model(self, theta) -> StructuralModel:
        p = expit(theta)
        cpts = {
            v: p[self.offsets[v]:self.offsets[v] + int(np.prod(self.shapes[v]))].reshape(self.shapes[v])
            for v in self.graph.names
        }
        return StructuralModel(self.graph, cpts)

    def theta(self, m: StructuralModel):
        return logit(np.concatenate([m.cpts[v].ravel() for v in self.graph.names]))

    def obs_batch(self, thetas):
        p = expit(np.atleast_2d(thetas))  # (k, dim)
        joint = np.ones((p.shape[0], self._entry.shape[1]))
        for entry, value in zip(self._entry, self._value):
            pv = p[:, entry]
            joint *= np.where(value, pv, 1.0 - pv)
        out = np.zeros((p.shape[0], self._n_obs))
        for i in range(p.shape[0]):
            out[i] = np.bincount(self._obs_index, joint[i], self._n_obs)
        return out

    def obs(self, theta):
        return self.obs_batch(theta)[0]

    def ace(self, theta):
        return true_ace(self.model(theta), self.exposure, self.outcome)

    def obs_jac(self, theta, h=1e-6):
        eye = np.eye(self.dim) * h
        f = self.obs_batch(np.concatenate([theta + eye, theta - eye]))
        return ((f[:self.dim] - f[self.dim:]) / (2 * h)).T

    def ace_grad(self, theta, h=1e-6):
        g = np.zeros(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            g[i] = (self.ace(theta + e) - self.ace(theta - e)) / (2 * h)
        return g


def _repair(par: _Param, theta, target, tol, iters=40, bound=6.0):
    """Gauss-Newton towards obs(theta) == target."""
    for _ in range(iters):
        r = par.obs(theta) - target
        if np.max(np.abs(r)) <= tol * 0.1:
            break
        J = par.obs_jac(theta)
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        theta = np.clip(theta + step, -bound, bound)
    return theta, float(np.max(np.abs(par.obs(theta) - target)))


@dataclass
class SearchResult:
    found: bool
    attempts: int
    m1: StructuralModel
    m2: StructuralModel | None
    report: WitnessReport | None
    null_dim: int


def search_witness(graph: MDag, rng, base: StructuralModel | None = None, max_attempts: int = 10_000,
                   ace_min: float = 0.05, tol: float = 1e-9, exposure="X", outcome="Y",
                   step_scale=1.0) -> SearchResult:
    """Projected random perturbation followed by least-squares repair.

    Perturbations are projected onto the local null space of the observable
    map (when it has one) and biased towards the direction that moves the
    effect. The best pair seen is returned even when no witness is found.
    """
    par = _Param(graph, exposure, outcome)
    if base is None:
        base = StructuralModel.random(graph, rng, 0.15, 0.85)
    t0 = par.theta(base)
    f0 = par.obs(t0)
    a0 = par.ace(t0)
    J = par.obs_jac(t0)
    _, s, vt = np.linalg.svd(J)
    rank = int(np.sum(s > 1e-8 * s[0]))
    null = vt[rank:].T
    g_ace = par.ace_grad(t0)
    best = None
    for attempt in range(1, max_attempts + 1):
        d = rng.normal(size=par.dim)
        if null.shape[1]:
            d = null @ (null.T @ (d + 3 * g_ace / (np.linalg.norm(g_ace) + 1e-12)))
        d *= step_scale * rng.uniform(0.2, 2.0) / (np.linalg.norm(d) + 1e-12)
        theta, resid = _repair(par, t0 + d, f0, tol)
        if resid > tol:
            continue
        gap = abs(par.ace(theta) - a0)
        if best is None or gap > best[0]:
            best = (gap, theta)
        if gap >= ace_min:
            break
    m2 = par.model(best[1]) if best else None
    rep = verify_witness_pair(base, m2, InterventionQuery(outcome, exposure, 1), tol) if m2 else None
    found = bool(rep and rep.is_witness and rep.ace_gap >= ace_min)
    return SearchResult(found, attempt, base, m2, rep, null.shape[1])


def save_pair(path, m1: StructuralModel, m2: StructuralModel, note=""):
    with open(path, "w") as fh:
        json.dump({"note": note, "m1": m1.to_dict(), "m2": m2.to_dict()}, fh, indent=1)


def load_pair(path):
    with open(path) as fh:
        d = json.load(fh)
    return StructuralModel.from_dict(d["m1"]), StructuralModel.from_dict(d["m2"])


def shipped_pair(name: str):
    """Bundled pairs: ``"dprime"`` (best pair found for the simplified D'
    graph) and ``"G"`` (a genuine witness for canonical G)."""
    return load_pair(files("mdagace") / "data" / f"witness_{name}.json")


def regenerate_shipped(out_dir, seed=2024, attempts=500):
    rng = np.random.default_rng(seed)
    r = search_witness(build_dprime(), rng, max_attempts=attempts)
    save_pair(f"{out_dir}/witness_dprime.json", r.m1, r.m2,
              f"best of {r.attempts} attempts; found={r.found}; local null dim={r.null_dim}")
    r = search_witness(build_canonical("G"), rng, max_attempts=attempts)
    save_pair(f"{out_dir}/witness_G.json", r.m1, r.m2,
              f"found={r.found} after {r.attempts} attempts")
