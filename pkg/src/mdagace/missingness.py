"""Missingness generation for X, Y, C4 and C5 following a canonical m-DAG.

Each indicator M_V is Bernoulli with logit = intercept + slopes on the
substantive parents the letter allows + optional exposure product term of the
missingness scenario + slope on a standard normal W shared by all indicators.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib.resources import files

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .catalog import LETTERS, missingness_parents
from .data import Dataset
from .dgp import COMPLETE_CONF, INCOMPLETE_CONF, OUTCOME_SCENARIOS, PREVALENCES, DgpSpec, generate_complete

INCOMPLETE = ("C4", "C5", "X", "Y")
MISS_SCENARIOS = ("i", "ii", "iii", "iv", "v")
SCENARIO_PRODUCT = {"i": None, "ii": ("X", "C3"), "iii": ("X", "C4"), "iv": ("X", "C5"), "v": ("X", "Y")}
TARGETS = {"C4": 0.15, "C5": 0.15, "X": 0.20, "Y": 0.20}

# slope magnitudes (log-odds per unit of the parent); see the decisions notes
MAIN_SLOPE = 0.5  # complete confounders
INC_SLOPE = 1.25  # C4 / C5 as causes of another variable's missingness
X_SLOPE = 1.0
Y_SLOPE = 1.5
SELF_SLOPE = 0.25  # binary variable causing its own missingness
Y_SELF_SLOPE = 5.0
TO_Y_SLOPE = 0.5  # any other cause of missingness in Y
INTERACTION_SLOPE = 0.5
W_SLOPE = 0.0  # per-cell value comes from calibration
CC_TARGET = 0.55
W_RANGE = (-4.0, 4.0)


class MissSpecError(ValueError):
    pass


def ind(v) -> str:
    return f"M_{v}"


def check_miss_scenario(s) -> str:
    s = str(s).lower()
    if s not in MISS_SCENARIOS:
        raise ValueError(f"unknown missingness scenario {s!r}; expected one of {MISS_SCENARIOS}")
    return s


def permitted_parents(letter, self_members=None) -> dict:
    return {
        v: set(p)
        for v, p in missingness_parents(letter, COMPLETE_CONF, INCOMPLETE_CONF, "X", "Y",
                                        self_members).items()
    }


@dataclass
class MissSpec:
    letter: str
    scenario: str = "i"
    coefficients: dict = field(default_factory=dict)  # subject -> {term: slope}
    intercepts: dict = field(default_factory=dict)  # subject -> intercept
    targets: dict = field(default_factory=lambda: dict(TARGETS))
    self_members: tuple | None = None

    def __post_init__(self):
        self.letter = str(self.letter).upper()
        if self.letter not in LETTERS:
            raise MissSpecError(f"unknown m-DAG {self.letter!r}")
        self.scenario = check_miss_scenario(self.scenario)
        for v, t in self.targets.items():
            if not 0 < t < 1:
                raise MissSpecError(f"target for {v} must lie in (0, 1)")
        self.validate()

    def validate(self):
        allowed = permitted_parents(self.letter, self.self_members)
        for v, coefs in self.coefficients.items():
            if v not in allowed:
                raise MissSpecError(f"{v} is not an incomplete variable")
            for term in coefs:
                factors = term.split(":")
                bad = [f for f in factors if f != "W" and f not in allowed[v]]
                if bad:
                    raise MissSpecError(
                        f"m-DAG {self.letter} does not allow {bad} to cause missingness in {v}"
                    )

    def replace(self, **kw) -> "MissSpec":
        return dataclasses.replace(self, **kw)

    def key(self) -> str:
        return f"{self.letter}|{self.scenario}"


def w_coefficients(w: float) -> dict:
    """Slopes of W on each indicator for a signed strength ``w``.

    w >= 0 loads W equally on all four indicators (positively correlated
    missingness, raising the complete-case share); w < 0 alternates the sign
    across (C4, C5, X, Y), which lowers it.
    """
    signs = (1, 1, 1, 1) if w >= 0 else (1, -1, 1, -1)
    return {v: abs(w) * s for v, s in zip(INCOMPLETE, signs)}


def default_missspec(letter, scenario="i", main_slope=None, inc_slope=None, x_slope=None, y_slope=None,
                     self_slope=None, y_self_slope=None, to_y_slope=None,
                     interaction_slope=None, w_slope=None,
                     with_W=True, self_members=None, intercepts=None) -> MissSpec:
    """All permitted parents enter with a main effect; self-masking arrows use
    ``self_slope`` (``y_self_slope`` for the outcome); other causes of M_Y use
    ``to_y_slope``; elsewhere X, Y and C4/C5 as causes use ``x_slope``,
    ``y_slope`` and ``inc_slope``, the complete confounders ``main_slope``."""
    main_slope = MAIN_SLOPE if main_slope is None else main_slope
    inc_slope = INC_SLOPE if inc_slope is None else inc_slope
    x_slope = X_SLOPE if x_slope is None else x_slope
    y_slope = Y_SLOPE if y_slope is None else y_slope
    self_slope = SELF_SLOPE if self_slope is None else self_slope
    y_self_slope = Y_SELF_SLOPE if y_self_slope is None else y_self_slope
    to_y_slope = TO_Y_SLOPE if to_y_slope is None else to_y_slope
    interaction_slope = INTERACTION_SLOPE if interaction_slope is None else interaction_slope
    w_slope = W_SLOPE if w_slope is None else w_slope
    scenario = check_miss_scenario(scenario)
    allowed = permitted_parents(letter, self_members)
    product = SCENARIO_PRODUCT[scenario]
    wc = w_coefficients(w_slope)
    coefs = {}
    for v in INCOMPLETE:
        c = {}
        for p in sorted(allowed[v], key=_ORDER.index):
            if p == v:
                c[p] = y_self_slope if v == "Y" else self_slope
            elif v == "Y":
                c[p] = to_y_slope
            else:
                c[p] = {"Y": y_slope, "X": x_slope, "C4": inc_slope, "C5": inc_slope}.get(p, main_slope)
        if product and all(f in allowed[v] for f in product):
            c[":".join(product)] = interaction_slope
        if with_W:
            c["W"] = wc[v]
        coefs[v] = c
    return MissSpec(letter, scenario, coefs, dict(intercepts or {}), self_members=self_members)


_ORDER = ("C1", "C2", "C3", "C4", "C5", "X", "Y")


def _linear_predictors(mspec: MissSpec, data: Dataset, w: np.ndarray) -> dict:
    vals = {c: data[c] for c in data.names}
    vals["W"] = w
    out = {}
    for v in INCOMPLETE:
        lp = np.zeros(data.n)
        for term, b in mspec.coefficients.get(v, {}).items():
            x = np.ones(data.n)
            for f in term.split(":"):
                x = x * vals[f]
            lp = lp + b * x
        out[v] = lp
    return out


def impose_missingness(data: Dataset, mspec: MissSpec, rng: np.random.Generator,
                       intercepts: dict | None = None) -> Dataset:
    """Mask cells of C4, C5, X, Y; appends indicator columns ``M_<v>``.

    ``A`` and the complete confounders are never touched.
    """
    mspec.validate()
    intercepts = {**mspec.intercepts, **(intercepts or {})}
    for v in INCOMPLETE:
        if v not in data:
            raise MissSpecError(f"data has no column {v}")
        if np.isnan(data[v]).any():
            raise MissSpecError("impose_missingness expects complete data")
    missing_icpt = [v for v in INCOMPLETE if v not in intercepts]
    if missing_icpt:
        raise MissSpecError(f"no intercept for {missing_icpt}; calibrate first")
    w = rng.standard_normal(data.n)
    lps = _linear_predictors(mspec, data, w)
    out = data.copy()
    for v in INCOMPLETE:
        m = rng.random(data.n) < expit(intercepts[v] + lps[v])
        col = out[v].copy()
        col[m] = np.nan
        out.columns[v] = col
        out.columns[ind(v)] = m.astype(float)
        out.roles[ind(v)] = "indicator"
    return out


def solve_intercept(lp: np.ndarray, target: float) -> float:
    """Intercept a with mean(expit(a + lp)) == target."""
    f = lambda a: float(np.mean(expit(a + lp))) - target  # noqa: E731
    lo, hi = -30.0, 30.0
    if f(lo) > 0 or f(hi) < 0:
        raise MissSpecError(f"cannot bracket an intercept for target {target}")
    return brentq(f, lo, hi, xtol=1e-12)


@dataclass
class MissCalibration:
    intercepts: dict
    achieved: dict
    complete_case: float
    w: float | None = None
    expected_complete_case: float | None = None


def with_w(mspec: MissSpec, w: float) -> MissSpec:
    wc = w_coefficients(w)
    coefs = {v: {**c, "W": wc[v]} for v, c in mspec.coefficients.items()}
    return mspec.replace(coefficients=coefs)


def _expected_cc(lps: dict, icpt: dict) -> float:
    obs = np.ones_like(next(iter(lps.values())))
    for v in INCOMPLETE:
        obs = obs * (1.0 - expit(icpt[v] + lps[v]))
    return float(obs.mean())


def calibrate_miss_intercepts(mspec: MissSpec, dgp: DgpSpec, mc_n: int = 10**5,
                              rng: np.random.Generator | None = None,
                              data: Dataset | None = None,
                              cc_target: float | None = None) -> MissCalibration:
    """Intercepts hitting each target proportion on one ``mc_n`` draw.

    The root is found on the expected proportion mean(expit(a + lp)). With
    ``cc_target`` the signed W strength (see ``w_coefficients``) is solved
    jointly so that the expected complete-case share matches it; if the
    target is out of reach the nearest end of ``W_RANGE`` is used. Realised
    proportions are reported from a Bernoulli draw on the same rows.
    """
    rng = rng or np.random.default_rng(0)
    data = data if data is not None else generate_complete(dgp, rng, mc_n)
    w_draw = rng.standard_normal(data.n)
    w_val = None
    if cc_target is not None:
        base = _linear_predictors(with_w(mspec, 0.0), data, w_draw)

        def cc_at(w):
            wc = w_coefficients(w)
            lps = {v: base[v] + wc[v] * w_draw for v in INCOMPLETE}
            icpt = {v: solve_intercept(lps[v], mspec.targets[v]) for v in INCOMPLETE}
            return _expected_cc(lps, icpt) - cc_target

        lo, hi = W_RANGE
        f_lo, f_hi = cc_at(lo), cc_at(hi)
        if f_lo > 0:
            w_val = lo
        elif f_hi < 0:
            w_val = hi
        else:
            w_val = brentq(cc_at, lo, hi, xtol=1e-6)
        mspec = with_w(mspec, w_val)
    lps = _linear_predictors(mspec, data, w_draw)
    icpt = {v: solve_intercept(lps[v], mspec.targets[v]) for v in INCOMPLETE}
    ms = {v: rng.random(data.n) < expit(icpt[v] + lps[v]) for v in INCOMPLETE}
    achieved = {v: float(m.mean()) for v, m in ms.items()}
    cc = float(np.mean(~np.any(np.column_stack(list(ms.values())), axis=1)))
    return MissCalibration(icpt, achieved, cc, w_val, _expected_cc(lps, icpt))


# -- shipped calibration table -------------------------------------------------


def calibration_key(letter, scenario, outcome_scenario, prevalence) -> str:
    return f"{str(letter).upper()}|{check_miss_scenario(scenario)}|{str(outcome_scenario).upper()}|{float(prevalence):g}"


def build_calibration_table(seed=20240901, mc_n=100_000, cc_target=CC_TARGET) -> dict:
    table = {}
    rng = np.random.default_rng(seed)
    for p in PREVALENCES:
        for osc in OUTCOME_SCENARIOS:
            dgp = DgpSpec.default(osc, p)
            data = generate_complete(dgp, rng, mc_n)
            for letter in LETTERS:
                for s in MISS_SCENARIOS:
                    ms = default_missspec(letter, s)
                    cal = calibrate_miss_intercepts(ms, dgp, rng=rng, data=data, cc_target=cc_target)
                    table[calibration_key(letter, s, osc, p)] = {
                        "intercepts": cal.intercepts,
                        "w": cal.w,
                        "achieved": cal.achieved,
                        "complete_case": cal.complete_case,
                    }
    return {"seed": seed, "mc_n": mc_n, "cc_target": cc_target,
            "slopes": {"main": MAIN_SLOPE, "inc": INC_SLOPE, "x": X_SLOPE, "y": Y_SLOPE, "self": SELF_SLOPE,
                       "y_self": Y_SELF_SLOPE, "to_y": TO_Y_SLOPE, "interaction": INTERACTION_SLOPE},
            "cells": table}


_CAL = None


def load_calibration() -> dict:
    global _CAL
    if _CAL is None:
        _CAL = json.loads((files("mdagace") / "data" / "calibration.json").read_text())
    return _CAL


def calibrated_missspec(letter, scenario, outcome_scenario, prevalence) -> MissSpec:
    cal = load_calibration()
    s = cal["slopes"]
    entry = cal["cells"][calibration_key(letter, scenario, outcome_scenario, prevalence)]
    return default_missspec(letter, scenario, main_slope=s["main"], inc_slope=s["inc"], x_slope=s["x"],
                            y_slope=s["y"], self_slope=s["self"], y_self_slope=s["y_self"], to_y_slope=s["to_y"],
                            interaction_slope=s["interaction"], w_slope=entry["w"],
                            intercepts=entry["intercepts"])
