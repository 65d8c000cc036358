"""Simulation grid: replications, performance metrics with Monte Carlo
standard errors, and persisted results."""

from __future__ import annotations

import csv
import dataclasses
import gzip
import hashlib
import io
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import LETTERS
from .dgp import OUTCOME_SCENARIOS, PREVALENCES, SAMPLE_SIZES, TARGET_ACE, DgpSpec, check_scenario, generate_complete
from .estimators import DEFAULT_B, cca_ace, gcomp_estimate
from .mi import MI_VARIANTS, run_mi_method
from .missingness import (MISS_SCENARIOS, calibrate_miss_intercepts, calibrated_missspec,
                          check_miss_scenario, default_missspec, impose_missingness, load_calibration,
                          with_w, CC_TARGET, calibration_key)
from .rng import stream

log = logging.getLogger(__name__)

COMPLETE_DATA = "CD"
CCA = "CCA"
ALL_METHODS = (CCA, *(v.value for v in MI_VARIANTS))
KNOWN_METHODS = (COMPLETE_DATA, *ALL_METHODS)
DEGRADED_SHARE = 0.05


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "NA" if math.isnan(x) else repr(x)


@dataclass(frozen=True)
class ScenarioConfig:
    letter: str | None  # None: no missingness (diagnostic mode)
    outcome: str = "I"
    miss: str | None = "i"
    prevalence: float = 0.5
    n: int | None = None
    nsim: int = 200
    methods: tuple = ALL_METHODS
    seed: int = 1
    B: int = DEFAULT_B
    m: int = 5
    T: int = 5

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "outcome", check_scenario(self.outcome))
        if float(self.prevalence) not in PREVALENCES:
            raise ConfigError(f"prevalence must be one of {PREVALENCES}")
        set_(self, "prevalence", float(self.prevalence))
        if self.letter is None or self.miss is None:
            set_(self, "letter", None)
            set_(self, "miss", None)
        else:
            letter = str(self.letter).upper()
            if letter not in LETTERS:
                raise ConfigError(f"unknown m-DAG {self.letter!r}")
            set_(self, "letter", letter)
            set_(self, "miss", check_miss_scenario(self.miss))
        if self.n is None:
            set_(self, "n", SAMPLE_SIZES[self.prevalence][self.outcome])
        if self.nsim < 2:
            raise ConfigError("nsim must be at least 2")
        methods = tuple(self.methods)
        bad = [x for x in methods if x not in KNOWN_METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {KNOWN_METHODS}")
        if self.letter is None and any(x != COMPLETE_DATA for x in methods):
            raise ConfigError("without a missingness mechanism only the complete-data method applies")
        set_(self, "methods", methods)
        if self.B < 2 or self.m < 2 or self.T < 1:
            raise ConfigError("need B >= 2, m >= 2, T >= 1")

    @property
    def key(self) -> str:
        """Identifies the data-generating setting; seeds derive from it."""
        return f"{self.letter or '-'}|{self.miss or '-'}|{self.outcome}|{self.prevalence:g}|n{self.n}"

    @property
    def run_key(self) -> str:
        """Identifies the full computation (used for resuming)."""
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, d) -> "ScenarioConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown cell fields {sorted(unknown)}")
        if "methods" in d:
            d["methods"] = tuple(d["methods"])
        return cls(**d)


@dataclass
class MetricsRow:
    method: str
    nsim: int
    failures: int
    bias: float
    rel_bias: float
    emp_se: float
    est_se: float
    coverage: float
    mcse_bias: float
    mcse_rel_bias: float
    mcse_emp_se: float
    mcse_est_se: float
    mcse_coverage: float
    degraded: bool = False
    cell: dict = field(default_factory=dict)


METRIC_COLUMNS = ("letter", "miss", "outcome", "prevalence", "n", "method", "nsim", "failures",
                  "bias", "rel_bias", "emp_se", "est_se", "coverage", "mcse_bias",
                  "mcse_rel_bias", "mcse_emp_se", "mcse_est_se", "mcse_coverage", "degraded")
ESTIMATE_COLUMNS = ("letter", "miss", "outcome", "prevalence", "n", "rep", "method", "status",
                    "estimate", "se", "lo", "hi", "covered", "error")


def compute_metrics(estimates, ses, ci_hits, truth: float = TARGET_ACE, method="",
                    failures: int = 0) -> MetricsRow:
    est = np.asarray(estimates, dtype=float)
    ses = np.asarray(ses, dtype=float)
    hits = np.asarray(ci_hits, dtype=float)
    n = est.size
    if n < 2:
        raise ValueError("need at least two estimates")
    bias = float(est.mean() - truth)
    emp = float(est.std(ddof=1))
    cov = float(100.0 * hits.mean())
    mcse_bias = emp / math.sqrt(n)
    return MetricsRow(
        method=method, nsim=n, failures=failures, bias=bias, rel_bias=100.0 * bias / truth,
        emp_se=emp, est_se=float(ses.mean()), coverage=cov,
        mcse_bias=mcse_bias, mcse_rel_bias=100.0 * mcse_bias / abs(truth),
        mcse_emp_se=emp / math.sqrt(2.0 * (n - 1)),
        mcse_est_se=float(ses.std(ddof=1) / math.sqrt(n)),
        mcse_coverage=math.sqrt(cov * (100.0 - cov) / n),
        degraded=failures > DEGRADED_SHARE * (n + failures),
    )


# -- one replication -----------------------------------------------------------

_MISS_CACHE: dict = {}


def cell_missspec(cfg: ScenarioConfig):
    """Shipped calibration if available, else calibrated now (and cached)."""
    try:
        return calibrated_missspec(cfg.letter, cfg.miss, cfg.outcome, cfg.prevalence)
    except (KeyError, FileNotFoundError):
        pass
    k = calibration_key(cfg.letter, cfg.miss, cfg.outcome, cfg.prevalence)
    if k not in _MISS_CACHE:
        ms = default_missspec(cfg.letter, cfg.miss)
        cal = calibrate_miss_intercepts(ms, DgpSpec.default(cfg.outcome, cfg.prevalence),
                                        rng=stream(cfg.seed, 0, f"calibrate/{k}"),
                                        cc_target=CC_TARGET)
        _MISS_CACHE[k] = with_w(ms, cal.w).replace(intercepts=cal.intercepts)
    return _MISS_CACHE[k]


def run_replication(cfg: ScenarioConfig, rep: int) -> list:
    dgp = DgpSpec.default(cfg.outcome, cfg.prevalence, cfg.n)
    om = dgp.outcome_spec()
    full = generate_complete(dgp, stream(cfg.seed, rep, f"{cfg.key}/data"))
    data = None
    if cfg.letter is not None:
        data = impose_missingness(full, cell_missspec(cfg), stream(cfg.seed, rep, f"{cfg.key}/miss"))
    out = []
    for method in cfg.methods:
        g = stream(cfg.seed, rep, f"{cfg.key}/{method}")
        rec = {"rep": rep, "method": method}
        try:
            if method == COMPLETE_DATA:
                est = gcomp_estimate(full, om, "X", cfg.B, g)
            elif method == CCA:
                est = cca_ace(data, om, "X", cfg.B, g)
            else:
                est = run_mi_method(data, method, om, cfg.B, g, m=cfg.m, T=cfg.T)
            rec.update(status="ok", estimate=est.point, se=est.se, lo=est.ci[0], hi=est.ci[1],
                       covered=est.covers(TARGET_ACE), error="")
        except Exception as e:  # a failed method never affects the others
            rec.update(status="failed", estimate=np.nan, se=np.nan, lo=np.nan, hi=np.nan,
                       covered=None, error=f"{type(e).__name__}: {e}")
        out.append(rec)
    return out


def _rep_task(args):
    cfg, rep = args
    return run_replication(cfg, rep)


def run_cell(cfg: ScenarioConfig, jobs: int = 1) -> tuple:
    """Returns (metrics rows, per-replication records)."""
    tasks = [(cfg, r) for r in range(cfg.nsim)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_rep_task, tasks, chunksize=max(1, cfg.nsim // (4 * jobs))))
    else:
        results = [_rep_task(t) for t in tasks]
    records = [rec for reps in results for rec in reps]
    cell = {"letter": cfg.letter or "-", "miss": cfg.miss or "-", "outcome": cfg.outcome,
            "prevalence": cfg.prevalence, "n": cfg.n}
    rows = []
    for method in cfg.methods:
        mine = [r for r in records if r["method"] == method]
        ok = [r for r in mine if r["status"] == "ok"]
        failures = len(mine) - len(ok)
        if failures:
            log.warning("%s %s: %d of %d replications failed", cfg.key, method, failures, len(mine))
        if len(ok) >= 2:
            row = compute_metrics([r["estimate"] for r in ok], [r["se"] for r in ok],
                                  [r["covered"] for r in ok], TARGET_ACE, method, failures)
        else:
            nan = float("nan")
            row = MetricsRow(method, len(ok), failures, *([nan] * 10), degraded=True)
        row.cell = cell
        rows.append(row)
    for r in records:
        r.update(cell)
    return rows, records


# -- grids ---------------------------------------------------------------------


def expand_grid(config: dict) -> list:
    """Cells from ``{"cells": [...]}`` and/or ``{"factorial": {...}}``; top-level
    keys (nsim, methods, seed, B, m, T, n) are defaults for every cell."""
    allowed = {"cells", "factorial", "nsim", "methods", "seed", "B", "m", "T", "n", "jobs"}
    unknown = set(config) - allowed
    if unknown:
        raise ConfigError(f"unknown grid keys {sorted(unknown)}")
    common = {k: config[k] for k in ("nsim", "methods", "seed", "B", "m", "T", "n") if k in config}
    cells = [ScenarioConfig.from_dict({**common, **c}) for c in config.get("cells", [])]
    fac = config.get("factorial")
    if fac:
        bad = set(fac) - {"letters", "outcomes", "miss", "prevalences"}
        if bad:
            raise ConfigError(f"unknown factorial keys {sorted(bad)}")
        for p in fac.get("prevalences", PREVALENCES):
            for letter in fac.get("letters", LETTERS):
                for o in fac.get("outcomes", OUTCOME_SCENARIOS):
                    for s in fac.get("miss", MISS_SCENARIOS):
                        cells.append(ScenarioConfig.from_dict(
                            {**common, "letter": letter, "outcome": o, "miss": s, "prevalence": p}))
    if not cells:
        raise ConfigError("grid has no cells")
    keys = [c.run_key for c in cells]
    if len(set(keys)) != len(keys):
        raise ConfigError("grid lists the same cell twice")
    return cells


def _rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        d = {**r.cell, **dataclasses.asdict(r)}
        w.writerow([d[c] if isinstance(d[c], str) else _fmt(d[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def _records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ESTIMATE_COLUMNS)
    for r in records:
        w.writerow([r[c] if isinstance(r[c], str) else _fmt(r[c]) for c in ESTIMATE_COLUMNS])
    return buf.getvalue()


def _row_from_dict(d) -> MetricsRow:
    cell = {k: d[k] for k in ("letter", "miss", "outcome", "prevalence", "n")}
    vals = {f.name: d[f.name] for f in dataclasses.fields(MetricsRow) if f.name != "cell"}
    return MetricsRow(**vals, cell=cell)


def _calibration_digest() -> str:
    try:
        blob = (files("mdagace") / "data" / "calibration.json").read_bytes()
    except FileNotFoundError:
        return "missing"
    return hashlib.sha256(blob).hexdigest()


def run_grid(config: dict, out_dir, jobs: int = 1, resume: bool = True, plots: bool = True) -> dict:
    """Run every cell; writes metrics.csv, estimates.csv.gz, manifest.json and
    figs/*.svg under ``out_dir``. Finished cells are stored under ``cells/``
    and skipped when the grid is run again."""
    cells = expand_grid(config)
    out = Path(out_dir)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    all_rows, all_records, status = [], [], []
    for cfg in cells:
        path = out / "cells" / f"{cfg.run_key}.json"
        if resume and path.exists():
            saved = json.loads(path.read_text())
            rows = [_row_from_dict(d) for d in saved["rows"]]
            records = saved["records"]
            state = "resumed"
        else:
            try:
                rows, records = run_cell(cfg, jobs)
            except Exception as e:  # isolate a broken cell from the rest of the grid
                log.error("cell %s failed: %s", cfg.key, e)
                status.append({"cell": cfg.to_dict(), "key": cfg.run_key, "state": "failed",
                               "error": f"{type(e).__name__}: {e}"})
                continue
            payload = {"config": cfg.to_dict(),
                       "rows": [{**dataclasses.asdict(r), **r.cell} for r in rows],
                       "records": records}
            path.write_text(json.dumps(payload, sort_keys=True, default=_json_default))
            saved = json.loads(path.read_text())
            rows = [_row_from_dict(d) for d in saved["rows"]]
            records = saved["records"]
            state = "done"
        status.append({"cell": cfg.to_dict(), "key": cfg.run_key, "state": "ok",
                       "degraded": [r.method for r in rows if r.degraded]})
        log.info("cell %s %s", cfg.key, state)
        all_rows.extend(rows)
        all_records.extend(records)
    (out / "metrics.csv").write_text(_rows_to_csv(all_rows))
    with open(out / "estimates.csv.gz", "wb") as fh:
        with gzip.GzipFile(filename="estimates.csv", mode="wb", fileobj=fh, mtime=0) as gz:
            gz.write(_records_to_csv(all_records).encode())
    manifest = {
        "package": "mdagace", "version": __version__, "python": platform.python_version(),
        "numpy": np.__version__, "config": config, "cells": status,
        "calibration_sha256": _calibration_digest(),
        "metrics_columns": list(METRIC_COLUMNS), "estimates_columns": list(ESTIMATE_COLUMNS),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    if plots:
        from .plots import write_figures
        write_figures(out / "metrics.csv", out / "figs")
    return manifest


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def read_metrics(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_estimates(path) -> list:
    with gzip.open(path, "rt", newline="") as fh:
        return list(csv.DictReader(fh))
