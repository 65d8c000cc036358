"""g-computation, complete-case analysis and bootstrap standard errors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .data import Dataset
from .fitting import FitError, fit, irls, ols
from .models import Family, ModelSpec

DEFAULT_B = 240
Z95 = 1.959963984540054


class EstimationError(RuntimeError):
    pass


class BootstrapDegenerateError(EstimationError):
    pass


@dataclass
class AceEstimate:
    point: float
    se: float
    ci: tuple
    method: str
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def from_se(cls, point, se, method, **diag) -> "AceEstimate":
        half = Z95 * se
        return cls(float(point), float(se), (float(point - half), float(point + half)), method, diag)

    def covers(self, truth) -> bool:
        return bool(self.ci[0] <= truth <= self.ci[1])

    def to_dict(self) -> dict:
        return {"method": self.method, "point": self.point, "se": self.se,
                "ci": list(self.ci), "diagnostics": self.diagnostics}


def _check_exposure(spec: ModelSpec, exposure):
    if not any(exposure in t for t in spec.terms):
        raise EstimationError(f"outcome model {spec} does not contain the exposure {exposure}")


def _contrast_designs(data, spec, exposure, rows=None):
    X1 = spec.design(data, rows, override={exposure: 1.0})
    X0 = spec.design(data, rows, override={exposure: 0.0})
    return X1, X0


def g_compute_ace(data: Dataset, spec: ModelSpec, exposure: str = "X", rows=None) -> float:
    """Mean difference of predictions with the exposure forced to 1 and to 0."""
    _check_exposure(spec, exposure)
    res = fit(data, spec, rows)
    if not res.converged:
        raise FitError(f"outcome model did not converge ({', '.join(res.flags) or 'unknown'})")
    X1, X0 = _contrast_designs(data, spec, exposure, rows)
    if spec.family is Family.GAUSSIAN:
        return float(np.mean((X1 - X0) @ res.coef))
    return float(np.mean(expit(X1 @ res.coef) - expit(X0 @ res.coef)))


# -- bootstrap -----------------------------------------------------------------


def _resample_counts(rng, n, size):
    return rng.multinomial(n, np.full(n, 1.0 / n), size=size)


def bootstrap_se(data: Dataset, estimator: Callable[[Dataset], float], B: int = DEFAULT_B,
                 rng: np.random.Generator | None = None) -> tuple:
    """Row-level nonparametric bootstrap; returns (se, failures).

    ``estimator`` maps a resampled Dataset to a number; exceptions or
    non-finite values count as failed resamples and are redrawn.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    rng = rng or np.random.default_rng()
    vals, failures, attempts = [], 0, 0
    idx = np.arange(data.n)
    while len(vals) < B and attempts < 10 * B:
        counts = _resample_counts(rng, data.n, 1)[0]
        attempts += 1
        try:
            v = float(estimator(data.subset(np.repeat(idx, counts))))
        except (FitError, EstimationError, np.linalg.LinAlgError, ArithmeticError):
            v = np.nan
        if np.isfinite(v):
            vals.append(v)
        else:
            failures += 1
    _check_failures(failures, attempts, len(vals), B)
    return float(np.std(vals, ddof=1)), failures


def _check_failures(failures, attempts, got, B):
    if got < B or failures > 0.5 * attempts:
        raise BootstrapDegenerateError(
            f"{failures} of {attempts} bootstrap resamples failed ({got} of {B} usable)"
        )


def _batched_linear_gcomp(X, y, D, W):
    """g-computation ACE for each row of count weights ``W`` (k x n).

    Returns (values, ok) where ``ok`` marks resamples whose weighted design is
    well conditioned.
    """
    n, p = X.shape
    outer = (X[:, :, None] * X[:, None, :]).reshape(n, p * p)
    xtx = (W @ outer).reshape(-1, p, p)
    xty = W @ (X * y[:, None])
    dbar = (W @ D) / n
    s = np.linalg.svd(xtx, compute_uv=False)
    ok = (s[:, -1] > s[:, 0] * 1e-10) & ((W > 0).sum(axis=1) > p)
    safe = np.where(ok[:, None, None], xtx, np.eye(p))
    beta = np.linalg.solve(safe, xty[:, :, None])[:, :, 0]
    vals = np.einsum("kp,kp->k", dbar, beta)
    return np.where(ok, vals, np.nan), ok


def bootstrap_gcomp_se(data: Dataset, spec: ModelSpec, exposure: str = "X", B: int = DEFAULT_B,
                       rng: np.random.Generator | None = None, rows=None) -> tuple:
    """Bootstrap SE of g_compute_ace; (se, failures).

    Uses the same resample draws as ``bootstrap_se`` with the g-computation
    closure, so both give identical results; the linear case is batched.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    rng = rng or np.random.default_rng()
    sub = data if rows is None else data.subset(rows)
    if spec.family is not Family.GAUSSIAN:
        return bootstrap_se(sub, lambda d: g_compute_ace(d, spec, exposure), B, rng)
    _check_exposure(spec, exposure)
    X = spec.design(sub)
    y = spec.response_vector(sub)
    X1, X0 = _contrast_designs(sub, spec, exposure)
    D = X1 - X0
    vals, failures, attempts = [], 0, 0
    while len(vals) < B and attempts < 10 * B:
        k = min(B - len(vals), 10 * B - attempts)
        W = _resample_counts(rng, sub.n, k).astype(float)
        attempts += k
        # Resamples are consumed in draw order, so a failure only shifts later
        # ones, exactly as in the sequential loop.
        v, ok = _batched_linear_gcomp(X, y, D, W)
        failures += int((~ok).sum())
        vals.extend(v[ok].tolist())
    _check_failures(failures, attempts, len(vals), B)
    return float(np.std(vals[:B], ddof=1)), failures


def gcomp_estimate(data: Dataset, spec: ModelSpec, exposure="X", B=DEFAULT_B, rng=None,
                   method="g-computation", rows=None) -> AceEstimate:
    point = g_compute_ace(data, spec, exposure, rows)
    se, failures = bootstrap_gcomp_se(data, spec, exposure, B, rng, rows)
    return AceEstimate.from_se(point, se, method, B=B, bootstrap_failures=failures,
                               n_used=int(data.n if rows is None else np.sum(rows)))


def cca_ace(data: Dataset, spec: ModelSpec, exposure="X", B=DEFAULT_B, rng=None) -> AceEstimate:
    """Complete-case analysis: drop rows missing any model column."""
    spec.check(data)
    rows = data.complete_rows(spec.columns)
    if rows.sum() < spec.p + 1:
        raise EstimationError(f"only {int(rows.sum())} complete rows for {spec.p} coefficients")
    est = gcomp_estimate(data, spec, exposure, B, rng, method="CCA", rows=rows)
    est.diagnostics["complete_cases"] = int(rows.sum())
    return est


__all__ = [
    "AceEstimate", "BootstrapDegenerateError", "DEFAULT_B", "EstimationError",
    "bootstrap_gcomp_se", "bootstrap_se", "cca_ace", "g_compute_ace", "gcomp_estimate",
    "irls", "ols",
]
