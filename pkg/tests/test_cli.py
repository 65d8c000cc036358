import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from mdagace.catalog import build_canonical, build_dpp
from mdagace.cli import build_parser, main
from mdagace.dgp import DgpSpec, generate_complete
from mdagace.dsl import format_mdag
from mdagace.missingness import calibrated_missspec, impose_missingness
from mdagace.rng import stream
from mdagace.tabular import StructuralModel


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "B.json").write_text(StructuralModel.random(build_canonical("B", with_U=True),
                                                     np.random.default_rng(1)).to_json())
    (d / "Dpp.json").write_text(StructuralModel.random(build_dpp(), np.random.default_rng(2)).to_json())
    (d / "bad.json").write_text("{not json")
    (d / "E.mdag").write_text(format_mdag(build_canonical("E")))
    (d / "A.mdag").write_text(format_mdag(build_canonical("A")))
    (d / "bad.mdag").write_text("node X kind=weird\n")
    dgp = DgpSpec.default("II", 0.5)
    full = generate_complete(dgp, stream(3, 0, "cli"), 500)
    impose_missingness(full, calibrated_missspec("A", "i", "II", 0.5), stream(3, 0, "m")).to_csv(d / "data.csv")
    return d


@pytest.mark.parametrize("letter,expected", [
    ("A", "Recoverable"), ("B", "Recoverable"), ("C", "Recoverable"),
    ("D", "NonRecoverable (neighbor: Z2→M_Z2)"), ("G", "ConjecturedNonRecoverable"),
])
def test_check_canonical(capsys, letter, expected):
    code, out, _ = run(capsys, "check", "--canonical", letter)
    assert code == 0
    assert out.splitlines()[0] == expected


def test_check_dsl(capsys, files):
    code, out, _ = run(capsys, "check", "--dsl", str(files / "E.mdag"))
    assert code == 0 and out.strip() == "FailsNeighborCondition (Z2→M_Z2)"
    code, out, _ = run(capsys, "check", "--dsl", str(files / "A.mdag"), "--json")
    assert json.loads(out)["verdict"] == "PassesNecessaryConditions"


def test_check_dsl_parse_error(capsys, files):
    code, _, err = run(capsys, "check", "--dsl", str(files / "bad.mdag"))
    assert code == 2 and "line 1" in err


def test_identify_matches_oracle(capsys, files):
    code, out, _ = run(capsys, "identify", "--model", str(files / "B.json"), "--mdag", "B", "--json")
    res = json.loads(out)
    assert code == 0 and res["gap"] < 1e-12
    code, out, _ = run(capsys, "identify", "--model", str(files / "Dpp.json"), "--mdag", "Dpp")
    assert code == 0


def test_identify_incompatible_model(capsys, files):
    code, _, err = run(capsys, "identify", "--model", str(files / "B.json"), "--mdag", "A")
    assert code == 1 and "not compatible" in err


def test_identify_wrong_formula_fails(capsys, files):
    code, _, _ = run(capsys, "identify", "--model", str(files / "B.json"), "--mdag", "B",
                     "--formula", "A")
    assert code == 1


def test_identify_malformed_json(capsys, files):
    code, _, err = run(capsys, "identify", "--model", str(files / "bad.json"), "--mdag", "B")
    assert code == 2 and "cannot parse" in err


def test_estimate_methods(capsys, files):
    om = "Y ~ C1 + C2 + C3 + C4 + C5 + X + X:C3 + C1:C4 + C2:C4 + C3:C4 + C4:C5 + C3:C5"
    for method in ("cca", "mi-smc", "mi-com"):
        code, out, _ = run(capsys, "estimate", "--data", str(files / "data.csv"), "--method", method,
                           "--outcome-model", om, "--boot", "20", "--m", "2", "--iter", "2", "--json")
        assert code == 0, method
        res = json.loads(out)
        assert res["ci"][0] < res["point"] < res["ci"][1]


def test_estimate_bad_formula(capsys, files):
    code, _, _ = run(capsys, "estimate", "--data", str(files / "data.csv"), "--method", "cca",
                     "--outcome-model", "Y ~ Q + X")
    assert code == 2


def test_plan_explain(capsys):
    code, out, _ = run(capsys, "plan", "--variant", "MI-Com", "--scenario", "II", "--explain")
    assert code == 0 and "C3:X" in out
    code, out, _ = run(capsys, "plan", "--variant", "MI-Sim", "--json")
    assert json.loads(out)["passive"] == []


def test_plan_unknown_variant(capsys):
    code, _, _ = run(capsys, "plan", "--variant", "MI-Foo")
    assert code == 2


def test_calibrate_scenario_I_is_exact(capsys):
    code, out, _ = run(capsys, "calibrate", "--scenario", "I", "--json")
    res = json.loads(out)
    assert code == 0 and res["beta6"] == 0.3 and abs(res["achieved_ace"] - 0.3) <= 1e-12


def test_calibrate_interaction_scenario(capsys):
    code, out, _ = run(capsys, "calibrate", "--scenario", "II", "--mc-n", "50000", "--json")
    res = json.loads(out)
    assert code == 0 and abs(res["achieved_ace"] - 0.3) <= 0.002
    assert abs(res["beta6"] - res["beta6_exact"]) < 0.05


def test_calibrate_missingness(capsys):
    code, out, _ = run(capsys, "calibrate", "--mdag", "C", "--miss", "ii", "--mc-n", "20000", "--json")
    res = json.loads(out)
    assert code == 0 and 0.5 <= res["complete_case"] <= 0.6


def test_simulate_single_cell(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "--mdag", "A", "--nsim", "2", "--methods", "CCA",
                       "--B", "10", "--n", "300", "--out", str(tmp_path), "--no-plots", "--seed", "4")
    assert code == 0
    assert (tmp_path / "metrics.csv").exists()


def test_simulate_bad_grid(capsys, tmp_path):
    (tmp_path / "g.json").write_text('{"cells": [{"letter": "Q"}]}')
    code, _, err = run(capsys, "simulate", "--grid", str(tmp_path / "g.json"), "--out", str(tmp_path))
    assert code == 2 and "unknown m-DAG" in err


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as e:
        main(["check"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["check", "--canonical", "A", "--seed", "-1"])
    assert e.value.code == 2


def test_help_lists_every_subcommand():
    text = build_parser().format_help()
    for cmd in ("check", "identify", "simulate", "estimate", "calibrate", "plan"):
        assert cmd in text


def test_console_entry_point():
    exe = shutil.which("mdagace")
    cmd = [exe] if exe else [sys.executable, "-m", "mdagace.cli"]
    res = subprocess.run([*cmd, "check", "--canonical", "G"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("ConjecturedNonRecoverable")
