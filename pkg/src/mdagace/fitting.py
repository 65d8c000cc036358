"""Linear (OLS) and logistic (IRLS) maximum-likelihood fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .models import Family, ModelSpec

SEPARATION_BOUND = 20.0


class FitError(RuntimeError):
    pass


class RankDeficientError(FitError):
    pass


@dataclass
class FitResult:
    coef: np.ndarray
    cov: np.ndarray
    converged: bool
    iterations: int
    sigma2: float | None = None  # residual variance (linear only)
    df_resid: int = 0
    flags: list = field(default_factory=list)
    xtx_inv: np.ndarray | None = None


def _check_rank(X):
    n, p = X.shape
    if n < p + 1:
        raise RankDeficientError(f"{n} usable rows for {p} coefficients")
    s = np.linalg.svd(X, compute_uv=False)
    if s[-1] <= s[0] * 1e-10:
        raise RankDeficientError("design matrix is rank deficient")


def ols(X: np.ndarray, y: np.ndarray) -> FitResult:
    _check_rank(X)
    q, r = np.linalg.qr(X)
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - X @ coef
    df = X.shape[0] - X.shape[1]
    sigma2 = float(resid @ resid / df)
    rinv = np.linalg.inv(r)
    xtx_inv = rinv @ rinv.T
    return FitResult(coef, sigma2 * xtx_inv, True, 1, sigma2, df, xtx_inv=xtx_inv)


def _deviance(y, mu):
    mu = np.clip(mu, 1e-300, 1 - 1e-16)
    return -2.0 * float(np.sum(y * np.log(mu) + (1 - y) * np.log1p(-mu)))


def irls(X: np.ndarray, y: np.ndarray, max_iter: int = 50, tol_score: float = 1e-8,
         tol_dev: float = 1e-10, ridge: float = 0.0, start=None, check_rank=True,
         bound: float = SEPARATION_BOUND) -> FitResult:
    """Newton-Raphson / IRLS for the logit link.

    Stops when max|score| < tol_score or the relative deviance change is below
    tol_dev. Coefficients beyond +-20 are taken as separation and the fit is
    flagged non-converged. ``ridge`` adds 0.5*ridge*|beta|^2 (intercept
    excluded) to the negative log-likelihood.
    """
    if check_rank:
        _check_rank(X)
    n, p = X.shape
    beta = np.zeros(p) if start is None else np.asarray(start, dtype=float).copy()
    pen = np.full(p, ridge)
    pen[0] = 0.0

    def pdev(b):
        return _deviance(y, expit(X @ b)) + float(np.sum(pen * b**2))

    dev_old = pdev(beta)
    flags = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(X @ beta)
        w = mu * (1 - mu)
        score = X.T @ (y - mu) - pen * beta
        if np.max(np.abs(score)) < tol_score:
            converged = True
            break
        info = (X * w[:, None]).T @ X + np.diag(pen)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            flags.append("singular information")
            break
        # step halving keeps the penalised deviance from increasing
        for _ in range(30):
            dev = pdev(beta + step)
            if np.isfinite(dev) and dev <= dev_old + 1e-12 * (abs(dev_old) + 1):
                break
            step = step / 2
        beta = beta + step
        if np.max(np.abs(beta)) > bound:
            flags.append("separation")
            break
        if abs(dev - dev_old) <= tol_dev * (abs(dev) + 0.1):
            converged = True
            break
        dev_old = dev
    mu = expit(X @ beta)
    info = (X * (mu * (1 - mu))[:, None]).T @ X + np.diag(pen)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.full((p, p), np.nan)
        converged = False
        flags.append("singular information")
    if "separation" in flags:
        converged = False
    return FitResult(beta, cov, converged, it, None, n - p, flags)


def fit(data, spec: ModelSpec, rows=None) -> FitResult:
    """Fit ``spec`` on ``rows`` (default: all rows, which must be complete)."""
    spec.check(data)
    X = spec.design(data, rows)
    y = spec.response_vector(data, rows)
    if np.isnan(X).any() or np.isnan(y).any():
        raise FitError("model columns contain missing values; drop or impute them first")
    if spec.family is Family.GAUSSIAN:
        return ols(X, y)
    return irls(X, y)
