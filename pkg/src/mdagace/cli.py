"""Command-line entry point: ``mdagace <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
IDENTIFY_TOL = 1e-8
CALIBRATE_TOL = 0.002


class UsageError(Exception):
    pass


def _emit(args, payload: dict, text: str):
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        print(text)


# -- check ---------------------------------------------------------------------


def cmd_check(args) -> int:
    from .catalog import Classification, build_canonical, classify_canonical
    from .dsl import parse_mdag
    from .graph import VerdictStatus, check_necessary_conditions

    if args.canonical:
        letter = args.canonical.upper()
        g = build_canonical(letter, with_W=args.with_W)
        cls = classify_canonical(letter)
        verdict = check_necessary_conditions(g)
        label = cls.value
        if cls is Classification.NON_RECOVERABLE and verdict.witness:
            kind = "neighbor" if verdict.status is VerdictStatus.FAILS_NEIGHBOR else "collider path"
            label += f" ({kind}: {verdict.witness})"
        source = f"canonical m-DAG {letter}"
    else:
        try:
            text = Path(args.dsl).read_text()
        except OSError as e:
            raise UsageError(f"cannot read {args.dsl}: {e}") from e
        g = parse_mdag(text)
        verdict = check_necessary_conditions(g)
        cls = None
        label = verdict.status.value if verdict.passes else f"{verdict.status.value} ({verdict.witness})"
        source = args.dsl
    payload = {"source": source, "verdict": verdict.status.value, "witness": verdict.witness,
               "classification": cls.value if cls else None,
               "summary": label}
    lines = [label]
    if cls is not None:
        lines.append(f"necessary conditions: {verdict.status.value}"
                     + (f" ({verdict.witness})" if verdict.witness else ""))
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


# -- identify --------------------------------------------------------------------


def _letter_graph(letter):
    from .catalog import build_canonical, build_dpp

    if letter.upper() in ("DPP", "D''"):
        return build_dpp(with_U=True)
    return build_canonical(letter.upper(), with_W=False, with_U=True)


def _formula_key(s):
    s = s.strip()
    return "Dpp" if s.upper() in ("DPP", "D''") else s.upper()


def cmd_identify(args) -> int:
    from .formulas import FORMULAS, Roles
    from .graph import GraphError
    from .tabular import StructuralModel, observable_law, true_ace

    try:
        text = Path(args.model).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {args.model}: {e}") from e
    try:
        model = StructuralModel.from_json(text)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, GraphError) as e:
        raise UsageError(f"cannot parse model {args.model}: {e}") from e
    letter = _formula_key(args.mdag)
    formula = _formula_key(args.formula or letter)
    if formula not in FORMULAS:
        raise UsageError(f"no closed-form expression for {formula}; choose from {sorted(FORMULAS)}")
    if letter not in FORMULAS and letter not in "ABCDEFGHIJ":
        raise UsageError(f"unknown m-DAG {args.mdag}")
    ref = _letter_graph(letter)
    extra_nodes = sorted(set(model.graph.names) - set(ref.names))
    extra_edges = sorted(f"{a}->{b}" for a, b in model.graph.edges if (a, b) not in ref.edges)
    if extra_nodes or extra_edges:
        msg = f"model is not compatible with m-DAG {letter}"
        if extra_nodes:
            msg += f"; unknown nodes {extra_nodes}"
        if extra_edges:
            msg += f"; edges outside the pattern {extra_edges}"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_FAIL
    roles = Roles(z3=("Z3",)) if formula == "Dpp" else Roles()
    value = FORMULAS[formula](observable_law(model), roles)
    oracle = true_ace(model)
    gap = abs(value - oracle)
    payload = {"mdag": letter, "formula": formula, "formula_value": value,
               "oracle_value": oracle, "gap": gap, "tolerance": IDENTIFY_TOL}
    _emit(args, payload, f"formula {formula}: {value:.15g}\noracle ACE: {oracle:.15g}\ngap: {gap:.3e}")
    return EXIT_OK if gap <= IDENTIFY_TOL else EXIT_FAIL


# -- estimate --------------------------------------------------------------------


def _binary_columns(data, cols):
    out = []
    for c in cols:
        v = data[c][~np.isnan(data[c])]
        if v.size and np.all((v == 0) | (v == 1)):
            out.append(c)
    return out


def cmd_estimate(args) -> int:
    from .data import Dataset
    from .estimators import cca_ace, gcomp_estimate
    from .mi import Variant, run_mi_method
    from .models import ModelSpec, ModelSpecError
    from .rng import stream

    try:
        spec = ModelSpec.parse(args.outcome_model)
    except ModelSpecError as e:
        raise UsageError(str(e)) from e
    try:
        data = Dataset.from_csv(args.data)
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot read {args.data}: {e}") from e
    try:
        spec.check(data)
    except ModelSpecError as e:
        raise UsageError(str(e)) from e
    method = args.method.lower()
    g = stream(args.seed, 0, f"estimate/{method}")
    if method in ("gcomp", "g-computation"):
        est = gcomp_estimate(data, spec, args.exposure, args.boot, g)
    elif method == "cca":
        est = cca_ace(data, spec, args.exposure, args.boot, g)
    else:
        try:
            variant = Variant.parse(method)
        except ValueError as e:
            raise UsageError(str(e)) from e
        aux = tuple(a for a in args.aux if a in data)
        missing_aux = [a for a in args.aux if a not in data and a != "A"]
        if missing_aux:
            raise UsageError(f"auxiliary columns {missing_aux} not in data")
        cols = set(spec.columns) | set(aux)
        incomplete = [c for c in ("C4", "C5", "X", "Y") if c in cols and np.isnan(data[c]).any()]
        incomplete += [c for c in data.incomplete_columns() if c in cols and c not in incomplete]
        binary = _binary_columns(data, [c for c in cols if c != spec.response])
        est = run_mi_method(data, variant, spec, args.boot, g, exposure=args.exposure, m=args.m,
                            T=args.iter, incomplete=incomplete, auxiliary=aux, binary=binary)
    payload = est.to_dict()
    _emit(args, payload, f"{est.method}: ACE {est.point:.6f} (SE {est.se:.6f}; "
                         f"95% CI {est.ci[0]:.6f}, {est.ci[1]:.6f})")
    return EXIT_OK


# -- simulate --------------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .harness import ConfigError, run_grid

    if args.grid:
        try:
            config = json.loads(Path(args.grid).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read grid {args.grid}: {e}") from e
    else:
        if not args.mdag:
            raise UsageError("give --grid FILE or a single cell via --mdag/--outcome/--miss/--prevalence")
        config = {"cells": [{"letter": args.mdag, "outcome": args.outcome, "miss": args.miss,
                             "prevalence": args.prevalence}]}
    for key in ("nsim", "B", "m", "T", "n"):
        val = getattr(args, key.lower() if key != "T" else "iter")
        if val is not None:
            config[key] = val
    if args.methods:
        config["methods"] = args.methods.split(",")
    if args.seed is not None:
        config["seed"] = args.seed
    try:
        manifest = run_grid(config, args.out, jobs=args.jobs, resume=not args.no_resume,
                            plots=not args.no_plots)
    except ConfigError as e:
        raise UsageError(str(e)) from e
    failed = [c for c in manifest["cells"] if c["state"] != "ok"]
    payload = {"out": str(args.out), "cells": len(manifest["cells"]), "failed": len(failed)}
    _emit(args, payload, f"wrote {args.out}/metrics.csv ({len(manifest['cells'])} cells, "
                         f"{len(failed)} failed)")
    return EXIT_FAIL if failed else EXIT_OK


# -- calibrate -------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    from .dgp import (TARGET_ACE, DgpSpec, calibrate_beta6, exact_ace, exact_beta6,
                      generate_complete)
    from .estimators import g_compute_ace
    from .rng import stream

    spec = DgpSpec.default(args.scenario, args.prevalence)
    if args.mdag:
        from .missingness import (CC_TARGET, calibrate_miss_intercepts, check_miss_scenario,
                                  default_missspec)
        ms = default_missspec(args.mdag, check_miss_scenario(args.miss))
        cal = calibrate_miss_intercepts(ms, spec, mc_n=args.mc_n,
                                        rng=stream(args.seed, 0, "calibrate/missingness"),
                                        cc_target=CC_TARGET)
        payload = {"mdag": args.mdag.upper(), "miss": args.miss, "scenario": spec.scenario,
                   "prevalence": spec.prevalence, "intercepts": cal.intercepts, "w": cal.w,
                   "achieved": cal.achieved, "complete_case": cal.complete_case}
        text = "\n".join([f"W strength: {cal.w:.6f}", *(
            f"M_{v}: intercept {cal.intercepts[v]:.6f}, missing {cal.achieved[v]:.4f}"
            for v in cal.intercepts), f"complete cases: {cal.complete_case:.4f}"])
        _emit(args, payload, text)
        return EXIT_OK
    b_mc = calibrate_beta6(spec, mc_n=args.mc_n, rng=stream(args.seed, 0, "calibrate/beta6"))
    b_exact = exact_beta6(spec)
    if spec.ratios == (0.0, 0.0):
        achieved = exact_ace(spec.replace(beta6=b_mc))  # the ACE is beta6 itself
    else:
        # same stream, so this is the draw the root was found on
        base = generate_complete(spec.replace(beta6=b_mc),
                                 stream(args.seed, 0, "calibrate/beta6"), args.mc_n)
        achieved = g_compute_ace(base, spec.outcome_spec(), "X")
    population = exact_ace(spec.replace(beta6=b_mc))
    ok = abs(achieved - TARGET_ACE) <= CALIBRATE_TOL
    payload = {"scenario": spec.scenario, "prevalence": spec.prevalence, "mc_n": args.mc_n,
               "beta6": b_mc, "achieved_ace": achieved, "population_ace": population,
               "beta6_exact": b_exact, "beta6_shipped": spec.beta6, "within_tolerance": ok}
    _emit(args, payload, f"beta6 {b_mc:.6f} (exact {b_exact:.6f}, shipped {spec.beta6:.6f})\n"
                         f"g-computation ACE on the calibration draw: {achieved:.6f}\n"
                         f"population ACE at this beta6: {population:.6f}")
    return EXIT_OK if ok else EXIT_FAIL


# -- plan ------------------------------------------------------------------------


def cmd_plan(args) -> int:
    from .dgp import DgpSpec
    from .mi import build_plan
    from .models import ModelSpec, ModelSpecError

    if args.outcome_model:
        try:
            om = ModelSpec.parse(args.outcome_model)
        except ModelSpecError as e:
            raise UsageError(str(e)) from e
    else:
        om = DgpSpec.default(args.scenario, 0.5).outcome_spec()
    try:
        plan = build_plan(args.variant, om, args.exposure, T=args.iter, m=args.m)
    except ValueError as e:
        raise UsageError(str(e)) from e
    payload = plan.to_dict()
    if args.explain:
        payload["reasons"] = plan.reasons
    text = plan.explain() if args.explain else "\n".join(
        [f"{plan.variant.value} (m={plan.m}, T={plan.T})"]
        + [f"  {v}: {plan.models[v]}" for v in plan.order])
    _emit(args, payload, text)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdagace", description=(
        "Recoverability of the average causal effect under missingness DAGs, "
        "and a simulation study of complete-case analysis and multiple imputation."))
    p.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp):
        sp.add_argument("--seed", type=int, default=None if sp.prog.endswith("simulate") else 1,
                        help="master seed (64-bit unsigned)")
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    sp = sub.add_parser("check", help="graphical recoverability checks")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--canonical", metavar="LETTER", choices=list("ABCDEFGHIJ") + list("abcdefghij"),
                     help="canonical m-DAG A-J")
    src.add_argument("--dsl", metavar="FILE", help="m-DAG in the text format")
    sp.add_argument("--with-W", dest="with_W", action="store_true",
                    help="add the common cause W of the indicators to a canonical m-DAG")
    common(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("identify", help="closed-form ACE vs interventional oracle")
    sp.add_argument("--model", required=True, metavar="FILE", help="structural model JSON")
    sp.add_argument("--mdag", required=True, metavar="LETTER", help="m-DAG the model follows (A, B, C, Dpp)")
    sp.add_argument("--formula", metavar="NAME", help="expression to evaluate (default: the m-DAG's)")
    common(sp)
    sp.set_defaults(func=cmd_identify)

    sp = sub.add_parser("estimate", help="estimate the ACE from a CSV file")
    sp.add_argument("--data", required=True, metavar="CSV")
    sp.add_argument("--method", required=True,
                    help="gcomp, cca, mi-sim, mi-eo, mi-ei, mi-ec, mi-com or mi-smc")
    sp.add_argument("--outcome-model", required=True, metavar="FORMULA",
                    help='e.g. "Y ~ C1 + C2 + X + X:C3"')
    sp.add_argument("--exposure", default="X")
    sp.add_argument("--aux", nargs="*", default=["A"], metavar="COL",
                    help="auxiliary variables for imputation (default: A when present)")
    sp.add_argument("--boot", type=int, default=240, help="bootstrap resamples")
    sp.add_argument("--m", type=int, default=5, help="imputations")
    sp.add_argument("--iter", type=int, default=5, help="FCS cycles")
    common(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("simulate", help="run a simulation grid")
    sp.add_argument("--grid", metavar="FILE", help="grid config JSON")
    sp.add_argument("--mdag", metavar="LETTER", help="single cell: m-DAG")
    sp.add_argument("--outcome", default="I", help="single cell: outcome scenario I-VI")
    sp.add_argument("--miss", default="i", help="single cell: missingness scenario i-v")
    sp.add_argument("--prevalence", type=float, default=0.5)
    sp.add_argument("--n", type=int, default=None, help="sample size override")
    sp.add_argument("--nsim", type=int, default=None)
    sp.add_argument("--methods", default=None, help="comma-separated, e.g. CCA,MI-SMC")
    sp.add_argument("--B", dest="b", type=int, default=None, help="bootstrap resamples")
    sp.add_argument("--m", type=int, default=None, help="imputations")
    sp.add_argument("--iter", type=int, default=None, help="FCS cycles")
    sp.add_argument("--out", default="results", help="output directory")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.add_argument("--no-resume", action="store_true", help="recompute finished cells")
    sp.add_argument("--no-plots", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("calibrate", help="calibrate beta6 or missingness intercepts")
    sp.add_argument("--scenario", default="I", help="outcome scenario I-VI")
    sp.add_argument("--prevalence", type=float, default=0.5)
    sp.add_argument("--mc-n", type=int, default=10**6, help="Monte Carlo sample size")
    sp.add_argument("--mdag", metavar="LETTER", help="calibrate missingness for this m-DAG instead")
    sp.add_argument("--miss", default="i", help="missingness scenario (with --mdag)")
    common(sp)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("plan", help="show an imputation plan")
    sp.add_argument("--variant", required=True, help="MI-Sim, MI-EO, MI-EI, MI-EC, MI-Com or MI-SMC")
    sp.add_argument("--scenario", default="I", help="outcome scenario whose model is used")
    sp.add_argument("--outcome-model", metavar="FORMULA", help="explicit outcome model instead")
    sp.add_argument("--exposure", default="X")
    sp.add_argument("--m", type=int, default=5)
    sp.add_argument("--iter", type=int, default=5)
    sp.add_argument("--explain", action="store_true", help="say why each product term is there")
    common(sp)
    sp.set_defaults(func=cmd_plan)
    return p


def _version():
    from . import __version__
    return __version__


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    if getattr(args, "seed", None) is not None and not (0 <= args.seed < 2**64):
        parser.error("--seed must be a 64-bit unsigned integer")
    if hasattr(args, "b"):
        args.B = args.b
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("ignore", category=UserWarning)
    from .dsl import DslError
    from .estimators import EstimationError
    from .fitting import FitError
    from .mi import ImputationError

    try:
        return args.func(args)
    except (UsageError, DslError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (EstimationError, FitError, ImputationError, ArithmeticError, RuntimeError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
