"""Rubin's rules and the MI + g-computation pipeline."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..estimators import DEFAULT_B, Z95, AceEstimate, bootstrap_gcomp_se, g_compute_ace
from ..models import ModelSpec
from .impute import ImputationWarning, impute
from .plans import DEFAULT_ORDER, Variant, build_plan


@dataclass
class PooledEstimate:
    point: float
    within: float
    between: float
    total: float
    ci: tuple
    points: tuple
    ses: tuple

    @property
    def se(self) -> float:
        return float(np.sqrt(self.total))


def pool_rubin(points, ses) -> PooledEstimate:
    points = np.asarray(points, dtype=float)
    ses = np.asarray(ses, dtype=float)
    m = points.size
    if m < 2:
        raise ValueError("Rubin's rules need at least two imputations")
    if ses.size != m:
        raise ValueError("one standard error per point estimate is required")
    q = float(points.mean())
    w = float(np.mean(ses**2))
    b = float(np.var(points, ddof=1))
    t = w + (1 + 1 / m) * b
    half = Z95 * np.sqrt(t)
    return PooledEstimate(q, w, b, t, (q - half, q + half), tuple(points), tuple(ses))


def run_mi_method(data: Dataset, variant, outcome: ModelSpec, B: int = DEFAULT_B,
                  rng: np.random.Generator | None = None, exposure="X", m=5, T=5,
                  incomplete=None, auxiliary=("A",), binary=None) -> AceEstimate:
    """Impute, apply g-computation with bootstrap SE to each completed set, pool."""
    rng = rng or np.random.default_rng()
    variant = Variant.parse(variant)
    if incomplete is None:
        incomplete = [v for v in DEFAULT_ORDER if v in data]
        incomplete += [c for c in data.incomplete_columns()
                       if c not in incomplete and data.roles.get(c) != "indicator"]
    plan = build_plan(variant, outcome, exposure, tuple(incomplete), binary, auxiliary, T, m)
    g_imp, g_boot = rng.spawn(2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ImputationWarning)
        imp = impute(data, plan, g_imp)
    points, ses, failures = [], [], 0
    for ds, g in zip(imp.datasets, g_boot.spawn(imp.m)):
        points.append(g_compute_ace(ds, outcome, exposure))
        se, f = bootstrap_gcomp_se(ds, outcome, exposure, B, g)
        ses.append(se)
        failures += f
    pooled = pool_rubin(points, ses)
    return AceEstimate(pooled.point, pooled.se, tuple(float(c) for c in pooled.ci), variant.value,
                       {"B": B, "m": m, "T": T, "within": pooled.within, "between": pooled.between,
                        "points": list(pooled.points), "bootstrap_failures": failures,
                        **{f"imputation_{k}": v for k, v in imp.warnings.items()}})
