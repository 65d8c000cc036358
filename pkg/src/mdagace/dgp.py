"""Complete-data generation for the point-exposure simulation.

A ~ N(0, 1); C1 ~ Bernoulli; C2..C5 sequential logistic models on A and the
earlier confounders; X logistic on A and C1..C5; Y linear with two exposure
by confounder products (X:C3, X:C4) and five confounder products, plus
Gaussian noise.

Everything upstream of Y is binary apart from A, so moments needed for
calibration are computed exactly: enumeration over the 64 binary
configurations and Gauss-Hermite quadrature over A.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib.resources import files

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.optimize import brentq
from scipy.special import expit, logit

from .data import Dataset
from .models import ModelSpec

CONFOUNDERS = ("C1", "C2", "C3", "C4", "C5")
COMPLETE_CONF = ("C1", "C2", "C3")
INCOMPLETE_CONF = ("C4", "C5")
OUTCOME_SCENARIOS = ("I", "II", "III", "IV", "V", "VI")
PREVALENCES = (0.1, 0.5)
# beta7 / beta6 (X:C3) and beta8 / beta6 (X:C4)
RATIOS = {
    "I": (0.0, 0.0),
    "II": (0.5, 0.0),
    "III": (0.0, -0.5),
    "IV": (0.5, -0.5),
    "V": (3.0, 0.0),
    "VI": (0.0, -3.0),
}
SAMPLE_SIZES = {
    0.1: {"I": 1400, "II": 2200, "III": 2000, "IV": 2700, "V": 2200, "VI": 2000},
    0.5: {s: 700 for s in OUTCOME_SCENARIOS},
}
CONF_PRODUCTS = ("C1:C4", "C2:C4", "C3:C4", "C4:C5", "C3:C5")
TARGET_ACE = 0.3

_GH_NODES = 64


class CalibrationError(RuntimeError):
    pass


def _prev_key(prevalence) -> str:
    return f"{float(prevalence):g}"


def check_scenario(s) -> str:
    s = str(s).upper()
    if s not in RATIOS:
        raise ValueError(f"unknown outcome scenario {s!r}; expected one of {OUTCOME_SCENARIOS}")
    return s


def check_prevalence(p) -> float:
    p = float(p)
    if p not in PREVALENCES:
        raise ValueError(f"prevalence must be one of {PREVALENCES}, got {p}")
    return p


@dataclass
class DgpSpec:
    """Coefficients for one (outcome scenario, prevalence) setting.

    ``confounders[c]`` and ``exposure`` map predictor names (and
    ``"intercept"``) to log-odds coefficients. ``outcome`` holds the Y
    coefficients that do not involve X; the exposure terms come from
    ``beta6`` and the scenario ratios.
    """

    confounders: dict
    exposure: dict
    outcome: dict
    beta6: float
    resid_sd: float
    scenario: str = "I"
    prevalence: float = 0.5
    n: int = 700
    ratios: tuple = field(default=None)

    def __post_init__(self):
        self.scenario = check_scenario(self.scenario)
        if self.ratios is None:
            self.ratios = RATIOS[self.scenario]
        if int(self.n) <= 0:
            raise ValueError("n must be positive")
        self.n = int(self.n)

    @property
    def beta7(self) -> float:
        return self.ratios[0] * self.beta6

    @property
    def beta8(self) -> float:
        return self.ratios[1] * self.beta6

    def replace(self, **kw) -> "DgpSpec":
        return dataclasses.replace(self, **kw)

    def outcome_coefficients(self) -> dict:
        c = dict(self.outcome)
        c["X"] = self.beta6
        if self.ratios[0]:
            c["C3:X"] = self.beta7
        if self.ratios[1]:
            c["C4:X"] = self.beta8
        return c

    def outcome_spec(self) -> ModelSpec:
        """The correctly specified outcome model (terms with a zero
        coefficient by design are left out)."""
        terms = [*CONFOUNDERS, "X"]
        if self.ratios[0]:
            terms.append("X:C3")
        if self.ratios[1]:
            terms.append("X:C4")
        terms += list(CONF_PRODUCTS)
        return ModelSpec("Y", tuple(terms))

    @classmethod
    def default(cls, scenario="I", prevalence=0.5, n=None, defaults=None) -> "DgpSpec":
        scenario = check_scenario(scenario)
        prevalence = check_prevalence(prevalence)
        d = defaults or load_defaults()
        setting = d["settings"][f"{scenario}|{_prev_key(prevalence)}"]
        exposure = dict(d["exposure"])
        exposure["intercept"] = d["exposure"]["intercept"][_prev_key(prevalence)]
        outcome = dict(d["outcome"])
        outcome["intercept"] = setting["intercept"]
        return cls(
            confounders={k: dict(v) for k, v in d["confounders"].items()},
            exposure=exposure,
            outcome=outcome,
            beta6=setting["beta6"],
            resid_sd=setting["resid_sd"],
            scenario=scenario,
            prevalence=prevalence,
            n=SAMPLE_SIZES[prevalence][scenario] if n is None else n,
        )


def _lp(coefs: dict, values: dict, n=None):
    out = coefs.get("intercept", 0.0)
    for k, b in coefs.items():
        if k == "intercept" or b == 0:
            continue
        v = 1.0
        for part in k.split(":"):
            v = v * values[part]
        out = out + b * v
    if n is not None and np.ndim(out) == 0:
        out = np.full(n, float(out))
    return out


def outcome_mean(spec: DgpSpec, values: dict):
    return _lp(spec.outcome_coefficients(), values)


def generate_complete(spec: DgpSpec, rng: np.random.Generator, n: int | None = None) -> Dataset:
    n = spec.n if n is None else int(n)
    vals = {"A": rng.standard_normal(n)}
    for c in CONFOUNDERS:
        p = expit(_lp(spec.confounders[c], vals, n))
        vals[c] = (rng.random(n) < p).astype(float)
    vals["X"] = (rng.random(n) < expit(_lp(spec.exposure, vals, n))).astype(float)
    vals["Y"] = outcome_mean(spec, vals) + spec.resid_sd * rng.standard_normal(n)
    roles = {"A": "auxiliary", "X": "exposure", "Y": "outcome", **{c: "confounder" for c in CONFOUNDERS}}
    order = ["A", *CONFOUNDERS, "X", "Y"]
    return Dataset({k: vals[k] for k in order}, roles)


# -- exact moments ---------------------------------------------------------------


def _quadrature():
    x, w = hermegauss(_GH_NODES)
    return x, w / np.sqrt(2 * np.pi)


def exact_configurations(confounders: dict, exposure: dict):
    """All 64 binary (C1..C5, X) configurations with their probabilities,
    integrated over A."""
    a, w = _quadrature()
    cfg = np.array(np.meshgrid(*[[0.0, 1.0]] * 6, indexing="ij")).reshape(6, -1).T
    names = (*CONFOUNDERS, "X")
    prob = np.zeros(len(cfg))
    for k, row in enumerate(cfg):
        vals = {"A": a}
        like = np.ones_like(a)
        for name, v in zip(names, row):
            coefs = confounders[name] if name != "X" else exposure
            p = expit(_lp(coefs, vals, len(a)))
            like = like * (p if v else 1 - p)
            vals[name] = np.full_like(a, v)
        prob[k] = np.sum(w * like)
    return {n: cfg[:, i] for i, n in enumerate(names)}, prob


def exact_marginals(confounders, exposure) -> dict:
    vals, prob = exact_configurations(confounders, exposure)
    return {k: float(np.sum(prob * v)) for k, v in vals.items()}


def exact_ace(spec: DgpSpec) -> float:
    m = exact_marginals(spec.confounders, spec.exposure)
    return spec.beta6 + spec.beta7 * m["C3"] + spec.beta8 * m["C4"]


def exact_beta6(spec: DgpSpec, target: float = TARGET_ACE) -> float:
    m = exact_marginals(spec.confounders, spec.exposure)
    r7, r8 = spec.ratios
    denom = 1.0 + r7 * m["C3"] + r8 * m["C4"]
    if abs(denom) < 1e-12:
        raise CalibrationError("the exposure effect does not move the ACE for these ratios")
    return target / denom


def exact_outcome_moments(spec: DgpSpec):
    """Exact mean and variance of the Y mean function."""
    vals, prob = exact_configurations(spec.confounders, spec.exposure)
    mu = outcome_mean(spec, vals)
    mean = float(np.sum(prob * mu))
    return mean, float(np.sum(prob * (mu - mean) ** 2))


# -- calibration -----------------------------------------------------------------


def calibrate_beta6(spec: DgpSpec, target: float = TARGET_ACE, grid=None, mc_n: int = 10**6,
                    rng: np.random.Generator | None = None) -> float:
    """Find beta6 on a grid so that large-sample g-computation hits ``target``.

    Without exposure interactions the ACE is beta6 itself and ``target`` is
    returned. Otherwise covariates and noise are drawn once (common random
    numbers); the g-computation estimate is then linear in beta6, so the root
    is found by interpolating between the grid points that bracket it.
    """
    from .estimators import g_compute_ace

    if spec.ratios == (0.0, 0.0):
        return float(target)
    grid = np.linspace(-2.0, 2.0, 81) if grid is None else np.asarray(grid, dtype=float)
    rng = rng or np.random.default_rng(0)
    base = generate_complete(spec.replace(beta6=0.0), rng, mc_n)
    mu0 = base["Y"]
    r7, r8 = spec.ratios
    dmu = base["X"] * (1 + r7 * base["C3"] + r8 * base["C4"])
    model = spec.outcome_spec()

    def ace_at(b):
        return g_compute_ace(base.with_columns(Y=mu0 + b * dmu), model, "X")

    vals = np.array([ace_at(b) - target for b in grid])
    sign = np.sign(vals)
    idx = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
    if len(idx) == 0:
        raise CalibrationError(
            f"ACE - target does not change sign on grid [{grid[0]}, {grid[-1]}]"
        )
    i = idx[0]
    lo, hi = grid[i], grid[i + 1]
    if vals[i] == vals[i + 1]:
        return float(lo)
    return float(lo - vals[i] * (hi - lo) / (vals[i + 1] - vals[i]))


DEFAULT_STRUCTURE = {
    # marginal prevalence targets (approximating the case-study descriptives)
    "targets": {"C1": 0.35, "C2": 0.19, "C3": 0.106, "C4": 0.52, "C5": 0.32},
    "confounders": {
        "C1": {},
        "C2": {"C1": 0.3, "A": 0.1},
        "C3": {"C1": 0.3, "C2": 0.6, "A": 0.1},
        "C4": {"C1": 0.2, "C2": 0.5, "C3": 0.8, "A": 0.1},
        "C5": {"C1": 0.2, "C2": 0.4, "C3": 0.8, "C4": 0.6, "A": 0.2},
    },
    "exposure": {"C1": 0.2, "C2": 0.7, "C3": 1.2, "C4": 0.8, "C5": 1.3, "A": 0.2},
    "outcome": {
        "C1": 0.1, "C2": 0.15, "C3": 0.3, "C4": 0.5, "C5": 0.1,
        "C1:C4": 0.05, "C2:C4": 0.1, "C3:C4": -0.1, "C4:C5": 0.1, "C3:C5": 0.1,
    },
}


def derive_defaults(structure=None) -> dict:
    """Solve for every intercept, beta6 and residual SD exactly."""
    s = json.loads(json.dumps(structure or DEFAULT_STRUCTURE))
    conf = {c: dict(v) for c, v in s["confounders"].items()}
    a, w = _quadrature()

    for c in CONFOUNDERS:
        def marg(b0, c=c):
            conf[c]["intercept"] = b0
            m = exact_marginals(conf, {"intercept": 0.0})
            return m[c] - s["targets"][c]
        conf[c]["intercept"] = brentq(marg, -15, 15, xtol=1e-14)
    exposure = dict(s["exposure"])
    intercepts = {}
    for p in PREVALENCES:
        def marg_x(b0):
            return exact_marginals(conf, {**exposure, "intercept": b0})["X"] - p
        intercepts[_prev_key(p)] = brentq(marg_x, -15, 15, xtol=1e-14)
    settings = {}
    for p in PREVALENCES:
        for sc in OUTCOME_SCENARIOS:
            spec = DgpSpec(conf, {**exposure, "intercept": intercepts[_prev_key(p)]},
                           {**s["outcome"], "intercept": 0.0}, 0.0, 1.0, sc, p)
            spec.beta6 = exact_beta6(spec)
            mean, var = exact_outcome_moments(spec)
            if var >= 1:
                raise CalibrationError("outcome mean function already has variance >= 1")
            settings[f"{sc}|{_prev_key(p)}"] = {
                "beta6": spec.beta6,
                "intercept": -mean,  # centres Y
                "resid_sd": float(np.sqrt(1.0 - var)),
                "n": SAMPLE_SIZES[p][sc],
            }
    return {
        "description": "Repo-calibrated simulation defaults; intercepts solved exactly so "
                       "marginals hit 'targets', beta6 gives ACE 0.3, Var(Y) = 1, E(Y) = 0.",
        "targets": s["targets"],
        "confounders": conf,
        "exposure": {**exposure, "intercept": intercepts},
        "outcome": s["outcome"],
        "settings": settings,
    }


_DEFAULTS = None


def load_defaults() -> dict:
    global _DEFAULTS
    if _DEFAULTS is None:
        _DEFAULTS = json.loads((files("mdagace") / "data" / "defaults.json").read_text())
    return _DEFAULTS
