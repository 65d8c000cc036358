"""Chained-equations imputation (FCS) and its substantive-model-compatible
variant (SMC-FCS, rejection sampling)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..data import Dataset
from ..fitting import RankDeficientError, irls, ols
from ..models import Family, ModelSpec
from .plans import ImputationPlan, Variant

RIDGE_FALLBACK = 1e-4
REJECTION_CAP = 1000


class ImputationError(RuntimeError):
    pass


class ImputationWarning(UserWarning):
    pass


@dataclass
class ImputedSet:
    datasets: list
    trace: dict = field(default_factory=dict)  # variable -> (m, T) array of imputed-value means
    warnings: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.datasets)


# -- Bayesian parameter draws -------------------------------------------------


def _psd_factor(cov):
    cov = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0, None))


def draw_linear(X, y, rng, counters=None):
    """(beta, sigma2) from the normal / scaled-inverse-chi-square posterior."""
    n, p = X.shape
    try:
        res = ols(X, y)
        coef, xtx_inv, df, rss = res.coef, res.xtx_inv, res.df_resid, res.sigma2 * res.df_resid
    except RankDeficientError:
        if n < 2:
            raise
        if counters is not None:
            counters["ridge"] = counters.get("ridge", 0) + 1
        pen = np.full(p, RIDGE_FALLBACK)
        pen[0] = 0
        xtx_inv = np.linalg.inv(X.T @ X + np.diag(pen))
        coef = xtx_inv @ X.T @ y
        df = max(n - p, 1)
        rss = float(np.sum((y - X @ coef) ** 2))
    sigma2 = rss / rng.chisquare(df)
    beta = coef + np.sqrt(sigma2) * (_psd_factor(xtx_inv) @ rng.standard_normal(p))
    return beta, sigma2


def fit_logistic(X, y, counters=None, what=""):
    try:
        res = irls(X, y)
        if res.converged:
            return res
    except RankDeficientError:
        pass
    if counters is not None:
        counters["ridge"] = counters.get("ridge", 0) + 1
    warnings.warn(f"logistic imputation model for {what} refitted with ridge {RIDGE_FALLBACK}",
                  ImputationWarning, stacklevel=3)
    res = irls(X, y, ridge=RIDGE_FALLBACK, check_rank=False, bound=np.inf)
    if not np.all(np.isfinite(res.coef)) or not np.all(np.isfinite(res.cov)):
        raise ImputationError(f"logistic imputation model for {what} failed after ridge fallback")
    return res


def draw_logistic(X, y, rng, counters=None, what=""):
    """Coefficients from the asymptotic normal around the MLE."""
    res = fit_logistic(X, y, counters, what)
    return res.coef + _psd_factor(res.cov) @ rng.standard_normal(X.shape[1])


# -- helpers -------------------------------------------------------------------


def _initialise(data: Dataset, vars_, rng) -> Dataset:
    cur = data.copy()
    for v in vars_:
        miss = np.isnan(cur[v])
        if not miss.any():
            continue
        obs = cur[v][~miss]
        if obs.size == 0:
            raise ImputationError(f"{v} has no observed values")
        cur.columns[v][miss] = rng.choice(obs, size=int(miss.sum()), replace=True)
    return cur


def _check_covered(data: Dataset, plan: ImputationPlan):
    cols = set()
    for spec in plan.models.values():
        cols.update(spec.columns)
    if plan.substantive is not None:
        cols.update(plan.substantive.columns)
    missing_cols = [c for c in cols if c not in data]
    if missing_cols:
        raise ImputationError(f"plan uses columns {missing_cols} absent from the data")
    uncovered = [c for c in cols if np.isnan(data[c]).any() and c not in plan.order]
    if uncovered:
        raise ImputationError(f"incomplete columns {uncovered} have no imputation model")


def _to_visit(data, plan):
    return [v for v in plan.order if np.isnan(data[v]).any()]


# -- FCS -------------------------------------------------------------------


def _fcs_chain(data: Dataset, plan: ImputationPlan, rng, counters):
    visit = _to_visit(data, plan)
    miss = {v: np.isnan(data[v]) for v in visit}
    cur = _initialise(data, visit, rng)
    trace = {v: np.empty(plan.T) for v in visit}
    for t in range(plan.T):
        for v in visit:
            spec = plan.models[v]
            obs = ~miss[v]
            X = spec.design(cur)
            try:
                if spec.family is Family.GAUSSIAN:
                    beta, s2 = draw_linear(X[obs], cur[v][obs], rng, counters)
                    draws = X[miss[v]] @ beta + np.sqrt(s2) * rng.standard_normal(int(miss[v].sum()))
                else:
                    beta = draw_logistic(X[obs], cur[v][obs], rng, counters, v)
                    draws = (rng.random(int(miss[v].sum())) < expit(X[miss[v]] @ beta)).astype(float)
            except ImputationError as e:
                raise ImputationError(f"{e} (cycle {t + 1})") from e
            except (RankDeficientError, np.linalg.LinAlgError) as e:
                raise ImputationError(f"imputation model for {v} failed in cycle {t + 1}: {e}") from e
            cur.columns[v][miss[v]] = draws
            trace[v][t] = float(draws.mean())
    return cur, trace


def impute_fcs(data: Dataset, plan: ImputationPlan, rng: np.random.Generator) -> ImputedSet:
    _check_covered(data, plan)
    counters = {}
    out, traces = [], {}
    for j, g in enumerate(rng.spawn(plan.m)):
        ds, tr = _fcs_chain(data, plan, g, counters)
        out.append(ds)
        for v, arr in tr.items():
            traces.setdefault(v, np.empty((plan.m, plan.T)))[j] = arr
    return ImputedSet(out, traces, counters)


# -- SMC-FCS ------------------------------------------------------------------


def _outcome_draw(spec: ModelSpec, cur: Dataset, rng, counters):
    X = spec.design(cur)
    return draw_linear(X, cur[spec.response], rng, counters)


def _rejection(cur: Dataset, v, rows, propose, spec: ModelSpec, beta, sigma2, rng, counters):
    """Rejection step for covariate ``v`` on ``rows`` (index array).

    Proposals come from ``propose(idx)``; a proposal is accepted with
    probability exp(-r^2 / (2 sigma2)), the outcome density relative to its
    maximum, r being the substantive-model residual at the proposal.
    """
    y = cur[spec.response]
    pending = rows.copy()
    best_val = np.full(rows.size, np.nan)
    best_ll = np.full(rows.size, -np.inf)
    pos = np.full(cur.n, -1)
    pos[rows] = np.arange(rows.size)
    col = cur.columns[v]
    for _ in range(REJECTION_CAP):
        if pending.size == 0:
            break
        prop = propose(pending)
        col[pending] = prop
        X = spec.design(cur, pending)
        r = y[pending] - X @ beta
        ll = -0.5 * r * r / sigma2
        idx = pos[pending]
        better = ll > best_ll[idx]
        best_ll[idx[better]] = ll[better]
        best_val[idx[better]] = prop[better]
        accept = np.log(rng.random(pending.size)) < ll
        pending = pending[~accept]
    if pending.size:
        counters["rejection_cap"] = counters.get("rejection_cap", 0) + int(pending.size)
        col[pending] = best_val[pos[pending]]


def _smc_chain(data: Dataset, plan: ImputationPlan, rng, counters):
    sub = plan.substantive
    y = sub.response
    visit = _to_visit(data, plan)
    miss = {v: np.isnan(data[v]) for v in visit}
    cur = _initialise(data, visit, rng)
    trace = {v: np.empty(plan.T) for v in visit}
    for t in range(plan.T):
        for v in visit:
            rows = np.flatnonzero(miss[v])
            if v == y:
                beta, s2 = _outcome_draw(sub, cur, rng, counters)
                X = sub.design(cur, rows)
                cur.columns[y][rows] = X @ beta + np.sqrt(s2) * rng.standard_normal(rows.size)
                trace[v][t] = float(cur[y][rows].mean())
                continue
            spec = plan.models[v]
            Xc = spec.design(cur)
            try:
                if spec.family is Family.GAUSSIAN:
                    psi, tau2 = draw_linear(Xc, cur[v], rng, counters)
                    mu = Xc @ psi

                    def propose(idx, mu=mu, tau2=tau2):
                        return mu[idx] + np.sqrt(tau2) * rng.standard_normal(idx.size)
                else:
                    psi = draw_logistic(Xc, cur[v], rng, counters, v)
                    pr = expit(Xc @ psi)

                    def propose(idx, pr=pr):
                        return (rng.random(idx.size) < pr[idx]).astype(float)
                beta, s2 = _outcome_draw(sub, cur, rng, counters)
            except (RankDeficientError, np.linalg.LinAlgError) as e:
                raise ImputationError(f"model for {v} failed in cycle {t + 1}: {e}") from e
            _rejection(cur, v, rows, propose, sub, beta, s2, rng, counters)
            trace[v][t] = float(cur[v][rows].mean())
    return cur, trace


def impute_smcfcs(data: Dataset, plan: ImputationPlan, rng: np.random.Generator) -> ImputedSet:
    """Covariate models are fitted to the current completed data (all rows),
    as is the substantive model."""
    if plan.substantive is None:
        raise ImputationError("SMC-FCS needs a plan with a substantive model")
    if plan.substantive.family is not Family.GAUSSIAN:
        raise ImputationError("SMC-FCS is implemented for a linear substantive model only")
    _check_covered(data, plan)
    counters = {}
    out, traces = [], {}
    for j, g in enumerate(rng.spawn(plan.m)):
        ds, tr = _smc_chain(data, plan, g, counters)
        out.append(ds)
        for v, arr in tr.items():
            traces.setdefault(v, np.empty((plan.m, plan.T)))[j] = arr
    return ImputedSet(out, traces, counters)


def impute(data: Dataset, plan: ImputationPlan, rng) -> ImputedSet:
    if plan.variant is Variant.SMC:
        return impute_smcfcs(data, plan, rng)
    return impute_fcs(data, plan, rng)
