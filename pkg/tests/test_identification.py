import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdagace.catalog import build_canonical, build_dpp, build_dprime
from mdagace.formulas import (
    ObservabilityError,
    ObservedQueries,
    Roles,
    po_A,
    recoverable_ace_A,
    recoverable_ace_B,
    recoverable_ace_C,
    recoverable_ace_Dpp,
)
from mdagace.graph import MDag, Node, NodeKind
from mdagace.tabular import (
    MISSING,
    InterventionQuery,
    PositivityError,
    StructuralModel,
    TabularLaw,
    observable_law,
    true_ace,
    true_potential_outcome,
)
from mdagace.witness import search_witness, shipped_pair, verify_witness_pair


def _no_missing_model(letter, rng):
    m = StructuralModel.random(build_canonical(letter), rng)
    zeros = {v: np.zeros_like(m.cpts[v]) for v in m.graph.of_kind(NodeKind.MISS)}
    return m.replace(**zeros)


def _standardization(m):
    """Back-door adjustment on the substantive joint (U summed out)."""
    law = m.joint().marginal(("Z1", "Z2", "X", "Y"))
    out = []
    for x in (1, 0):
        s = 0.0
        for z1, z2 in itertools.product((0, 1), repeat=2):
            z = {"Z1": z1, "Z2": z2}
            s += law.cond({"Y": 1}, {"X": x, **z}) * law.prob(z)
        out.append(s)
    return out[0] - out[1]


# -- TabularLaw / StructuralModel ---------------------------------------------


def test_law_normalization_checked():
    with pytest.raises(ValueError):
        TabularLaw(("A",), [0.3, 0.3])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_marginal_and_condition_preserve_normalization(seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(16)).reshape(2, 2, 2, 2)
    law = TabularLaw("ABCD", p)
    assert abs(law.marginal(("C", "A")).probs.sum() - 1) < 1e-12
    assert abs(law.condition({"B": 1}).probs.sum() - 1) < 1e-12
    assert law.marginal(("C", "A")).probs.shape == (2, 2)


def test_cpt_shape_validation():
    g = build_dprime()
    m = StructuralModel.random(g, np.random.default_rng(0))
    with pytest.raises(ValueError):
        m.replace(Y=np.array([0.5, 0.5]))


def test_json_round_trip():
    m = StructuralModel.random(build_canonical("C", with_W=True), np.random.default_rng(3))
    m2 = StructuralModel.from_json(m.to_json())
    assert m2.graph == m.graph
    assert m2.joint().max_abs_diff(m.joint()) == 0.0


def test_json_parent_order_is_respected():
    m = StructuralModel.random(build_dprime(), np.random.default_rng(3))
    d = m.to_dict()
    spec = d["cpts"]["Y"]
    spec["parents"] = spec["parents"][::-1]
    spec["p1"] = np.transpose(np.array(spec["p1"])).tolist()
    assert StructuralModel.from_dict(d).joint().max_abs_diff(m.joint()) == 0.0


def test_json_parent_mismatch_rejected():
    d = StructuralModel.random(build_dprime(), np.random.default_rng(3)).to_dict()
    d["cpts"]["Y"]["parents"] = ["X"]
    with pytest.raises(ValueError):
        StructuralModel.from_dict(d)


# -- observable law -----------------------------------------------------------


def test_observable_law_without_missingness_is_substantive_joint():
    m = _no_missing_model("C", np.random.default_rng(1))
    obs = observable_law(m)
    sub = m.joint().marginal(("Z1", "Z2", "X", "Y"))
    for z1, z2, x, y in itertools.product((0, 1), repeat=4):
        e = {"Z1": z1, "Z2": z2, "X": x, "Y": y}
        assert obs.prob(e) == pytest.approx(sub.prob(e), abs=1e-15)
    assert obs.prob({"X": MISSING}) == 0.0


def test_masking_identity():
    m = StructuralModel.random(build_canonical("H", with_W=True), np.random.default_rng(2))
    obs = observable_law(m)
    full = m.joint()
    for v, mv in m.graph.proxy.items():
        assert obs.prob({v: MISSING}) == pytest.approx(full.prob({mv: 1}), abs=1e-14)
        assert obs.prob({v: MISSING, mv: 0}) == 0.0


def test_observable_law_matches_direct_enumeration():
    rng = np.random.default_rng(11)
    nodes = [Node("U", NodeKind.LATENT), Node("Z"), Node("X"), Node("Y"),
             Node("M_X", NodeKind.MISS, "X")]
    g = MDag(nodes, [("U", "Z"), ("U", "Y"), ("Z", "X"), ("X", "Y"), ("Z", "M_X"), ("Y", "M_X")])
    m = StructuralModel.random(g, rng)
    obs = observable_law(m)
    names = g.names
    for x in (0, 1):
        direct = 0.0
        for vals in itertools.product((0, 1), repeat=len(names)):
            a = dict(zip(names, vals))
            if a["X"] != x or a["M_X"] != 0:
                continue
            p = 1.0
            for v in names:
                pa = m.parent_order(v)
                p1 = m.cpts[v][tuple(a[u] for u in pa)]
                p *= p1 if a[v] else 1 - p1
            direct += p
        assert obs.prob({"X": x, "M_X": 0}) == pytest.approx(direct, abs=1e-15)


# -- interventional oracle ----------------------------------------------------


def test_null_effect():
    g = MDag([Node("X"), Node("Y"), Node("Z")], [("Z", "X")])
    m = StructuralModel.random(g, np.random.default_rng(0))
    p1 = true_potential_outcome(m, InterventionQuery("Y", "X", 1))
    p0 = true_potential_outcome(m, InterventionQuery("Y", "X", 0))
    assert p1 == pytest.approx(m.cpts["Y"], abs=1e-15)
    assert p0 == pytest.approx(p1, abs=1e-15)


def test_pure_confounding_by_hand():
    g = MDag([Node("Z"), Node("X"), Node("Y")], [("Z", "X"), ("Z", "Y"), ("X", "Y")])
    m = StructuralModel(g, {
        "Z": np.array(0.3),
        "X": np.array([0.2, 0.7]),
        "Y": np.array([[0.1, 0.4], [0.5, 0.9]]),  # indexed [z, x]
    })
    # P(Y=1|do(X=1)) = 0.7*0.4 + 0.3*0.9 ; do(0): 0.7*0.1 + 0.3*0.5
    assert true_potential_outcome(m, InterventionQuery("Y", "X", 1)) == pytest.approx(0.55, abs=1e-15)
    assert true_potential_outcome(m, InterventionQuery("Y", "X", 0)) == pytest.approx(0.22, abs=1e-15)
    # observational contrast differs because of confounding
    law = m.joint()
    assert law.cond({"Y": 1}, {"X": 1}) != pytest.approx(0.55, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(list("ABCDG")))
def test_interventional_normalization(seed, letter):
    m = StructuralModel.random(build_canonical(letter), np.random.default_rng(seed))
    for x in (0, 1):
        tot = sum(
            true_potential_outcome(m, InterventionQuery("Y", "X", x, y)) for y in (0, 1)
        )
        assert tot == pytest.approx(1.0, abs=1e-12)


def test_positivity_error_for_do():
    g = MDag([Node("Z"), Node("X"), Node("Y")], [("Z", "X"), ("Z", "Y"), ("X", "Y")])
    m = StructuralModel(g, {
        "Z": np.array(0.5),
        "X": np.array([0.0, 0.6]),
        "Y": np.full((2, 2), 0.5),
    })
    with pytest.raises(PositivityError):
        true_potential_outcome(m, InterventionQuery("Y", "X", 1))


def test_oracle_invariant_to_relabeling():
    rng = np.random.default_rng(5)
    m = StructuralModel.random(build_canonical("B"), rng)
    d = m.to_dict()
    d["nodes"] = d["nodes"][::-1]
    m2 = StructuralModel.from_dict(d)
    assert true_ace(m2) == pytest.approx(true_ace(m), abs=1e-14)


# -- recovery formulas ----------------------------------------------------------


@pytest.mark.parametrize("letter,formula", [
    ("A", recoverable_ace_A), ("B", recoverable_ace_B), ("C", recoverable_ace_C),
])
def test_formula_matches_oracle(letter, formula):
    rng = np.random.default_rng(ord(letter))
    g = build_canonical(letter)
    for _ in range(25):
        m = StructuralModel.random(g, rng)
        assert formula(observable_law(m)) == pytest.approx(true_ace(m), abs=1e-10)


def test_dpp_formula_matches_oracle():
    rng = np.random.default_rng(99)
    g = build_dpp()
    for _ in range(25):
        m = StructuralModel.random(g, rng)
        assert recoverable_ace_Dpp(observable_law(m)) == pytest.approx(true_ace(m), abs=1e-10)


@pytest.mark.parametrize("formula", [recoverable_ace_A, recoverable_ace_B, recoverable_ace_C])
def test_degenerate_law_gives_standardization(formula):
    m = _no_missing_model("A", np.random.default_rng(7))
    assert formula(observable_law(m)) == pytest.approx(_standardization(m), abs=1e-12)


def test_dpp_degenerate():
    m = StructuralModel.random(build_dpp(), np.random.default_rng(8))
    m = m.replace(**{v: np.zeros_like(m.cpts[v]) for v in m.graph.of_kind(NodeKind.MISS)})
    law = m.joint().marginal(("Z1", "Z2", "Z3", "X", "Y"))
    expect = 0.0
    for x, sign in ((1, 1), (0, -1)):
        for z in itertools.product((0, 1), repeat=3):
            ev = dict(zip(("Z1", "Z2", "Z3"), z))
            expect += sign * law.cond({"Y": 1}, {"X": x, **ev}) * law.prob(ev)
    assert recoverable_ace_Dpp(observable_law(m)) == pytest.approx(expect, abs=1e-12)


def test_B_collapses_to_A_when_x_and_z2_indicators_are_noise():
    rng = np.random.default_rng(12)
    m = StructuralModel.random(build_canonical("B"), rng)
    const = {}
    for v in ("M_X", "M_Z2"):
        const[v] = np.full_like(m.cpts[v], rng.uniform(0.1, 0.4))
    m = m.replace(**const)
    law = observable_law(m)
    assert recoverable_ace_B(law) == pytest.approx(recoverable_ace_A(law), abs=1e-12)


def test_C_formula_on_A_and_B_models():
    rng = np.random.default_rng(13)
    for letter in "AB":
        m = StructuralModel.random(build_canonical(letter), rng)
        assert recoverable_ace_C(observable_law(m)) == pytest.approx(true_ace(m), abs=1e-10)


def test_printed_row_C_variant_disagrees_with_oracle():
    # The printed row keeps x in the numerator joint term where the derivation
    # sums over x'; only the derived form matches the oracle.
    rng = np.random.default_rng(14)
    m = StructuralModel.random(build_canonical("C"), rng)
    law = observable_law(m)
    assert recoverable_ace_C(law) == pytest.approx(true_ace(m), abs=1e-10)
    assert abs(recoverable_ace_C(law, literal=True) - true_ace(m)) > 1e-3


def test_positivity_violation_detected():
    m = StructuralModel.random(build_canonical("B"), np.random.default_rng(4))
    # M_X = 1 whenever Z2 = 1: the complete-case stratum Z2=1 is empty
    t = m.cpts["M_X"].copy()
    t[:, 1] = 1.0
    m = m.replace(M_X=t)
    with pytest.raises(PositivityError, match="not positive"):
        recoverable_ace_B(observable_law(m))


def test_negative_control_G():
    m = StructuralModel.random(build_canonical("G"), np.random.default_rng(15))
    gap = recoverable_ace_A(observable_law(m)) - true_ace(m)
    assert abs(gap) > 1e-3


def test_negative_control_dpp_self_arrow():
    g = build_dpp().with_edges([("Z3", "M_Z3")])
    m = StructuralModel.random(g, np.random.default_rng(16))
    assert abs(recoverable_ace_Dpp(observable_law(m)) - true_ace(m)) > 1e-3


def test_lookups_must_condition_on_observed_indicator():
    m = StructuralModel.random(build_canonical("A"), np.random.default_rng(0))
    q = ObservedQueries(observable_law(m), Roles())
    with pytest.raises(ObservabilityError):
        q.p({"Z2": 1})
    with pytest.raises(ObservabilityError):
        q.c({"Y": 1}, {"X": 1, "M_X": 0})
    assert q.p({"Z2": 1, "M_Z2": 0}) > 0
    assert q.p({"Z1": 0}) > 0  # complete variable


def test_formulas_only_use_observable_lookups():
    m = StructuralModel.random(build_canonical("C"), np.random.default_rng(0))
    law = observable_law(m)
    calls = []
    orig = law.prob

    def spy(event):
        calls.append(dict(event))
        return orig(event)

    law.prob = spy
    recoverable_ace_C(law)
    assert calls
    for ev in calls:
        for v, mv in (("X", "M_X"), ("Y", "M_Y"), ("Z2", "M_Z2")):
            if ev.get(v) in (0, 1):
                assert ev.get(mv) == 0


def test_po_A_sums_to_one_over_y():
    m = StructuralModel.random(build_canonical("A"), np.random.default_rng(21))
    law = observable_law(m)
    for x in (0, 1):
        assert po_A(law, Roles(), x, 0) + po_A(law, Roles(), x, 1) == pytest.approx(1.0, abs=1e-12)


def test_group_roles():
    g = build_canonical("B", z1=("Z1", "Z1b"), z2=("Z2", "Z2b"))
    m = StructuralModel.random(g, np.random.default_rng(22))
    roles = Roles(z1=("Z1", "Z1b"), z2=("Z2", "Z2b"))
    assert recoverable_ace_B(observable_law(m), roles) == pytest.approx(true_ace(m), abs=1e-10)


# -- witnesses ------------------------------------------------------------------


def test_identical_models_are_not_a_witness():
    m = StructuralModel.random(build_dprime(), np.random.default_rng(0))
    rep = verify_witness_pair(m, m)
    assert rep.observable_gap == 0.0 and rep.ace_gap == 0.0
    assert not rep.is_witness


def test_witness_requires_same_variables():
    m1 = StructuralModel.random(build_dprime(), np.random.default_rng(0))
    m2 = StructuralModel.random(build_canonical("A"), np.random.default_rng(0))
    with pytest.raises(ValueError):
        verify_witness_pair(m1, m2)


def test_shipped_G_witness_is_valid():
    m1, m2 = shipped_pair("G")
    rep = verify_witness_pair(m1, m2)
    assert rep.observable_gap <= 1e-9
    assert rep.ace_gap >= 0.05
    assert rep.is_witness


def test_search_finds_witness_for_G():
    res = search_witness(build_canonical("G"), np.random.default_rng(3), max_attempts=200)
    assert res.found


def test_no_witness_for_A_in_1000_attempts():
    res = search_witness(build_canonical("A"), np.random.default_rng(1), max_attempts=1000)
    assert not res.found
    # repaired pairs exist but leave the effect unchanged
    assert res.report is not None and res.report.ace_gap < 1e-6
