import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdagace.catalog import (
    LETTERS,
    Classification,
    build_canonical,
    build_dpp,
    build_dprime,
    classify_canonical,
    edge_table,
)
from mdagace.graph import (
    Conditional,
    CycleError,
    GraphError,
    GraphSurgery,
    MDag,
    Node,
    NodeKind,
    VerdictStatus,
    _collider_paths,
    check_necessary_conditions,
    d_separated,
)


def dag(edges, names=None):
    names = names or sorted({n for e in edges for n in e})
    return MDag([Node(n) for n in names], edges)


def test_chain_blocks():
    g = dag([("A", "B"), ("B", "C")])
    assert d_separated(g, {"A"}, {"C"}, {"B"})
    assert not d_separated(g, {"A"}, {"C"})


def test_collider_opens():
    g = dag([("A", "B"), ("C", "B")])
    assert not d_separated(g, {"A"}, {"C"}, {"B"})
    assert d_separated(g, {"A"}, {"C"})


def test_descendant_of_collider_opens():
    g = dag([("A", "B"), ("C", "B"), ("B", "D")])
    assert not d_separated(g, "A", "C", "D")


def test_overlapping_sets_rejected():
    g = dag([("A", "B")])
    with pytest.raises(ValueError):
        d_separated(g, {"A"}, {"A", "B"})


def test_mdag_B_rule1_statement():
    g = build_canonical("B", with_W=False)
    assert d_separated(g, {"Y"}, {"M_Y"}, {"X", "Z1", "Z2"}, GraphSurgery.over("X"))


def test_mdag_C_statements_used_in_derivation():
    g = build_canonical("C")
    assert d_separated(g, "Y", "M_Y", {"X", "Z1", "Z2"}, GraphSurgery.over("X"))
    assert d_separated(g, "Y", "X", {"Z1", "Z2", "M_X", "M_Y", "M_Z2"}, GraphSurgery.under("X"))
    assert d_separated(g, "M_Z2", "Z2", {"X", "Y", "Z1", "M_Y", "M_X"}, GraphSurgery.over("X"))
    assert d_separated(g, "M_X", "M_Z2", {"X", "Y", "Z1", "Z2", "M_Y"})


def test_dpp_statements():
    g = build_dpp()
    assert d_separated(g, "Z2", "M_Z2", {"Z1", "Z3"})
    assert d_separated(g, "M_Z3", "M_Z2", {"Z1", "Z3"})
    assert d_separated(g, "M_Z3", "Z3", {"Z1", "Z2", "M_Z2"})


def test_cycle_rejected():
    with pytest.raises(CycleError) as err:
        dag([("A", "B"), ("B", "C"), ("C", "A")])
    assert set(err.value.cycle) == {"A", "B", "C"}


def test_indicator_cannot_cause_substantive():
    with pytest.raises(GraphError):
        MDag([Node("X"), Node("M_X", NodeKind.MISS, "X"), Node("Y")], [("M_X", "Y")])


def test_latent_has_no_parents():
    with pytest.raises(GraphError):
        MDag([Node("X"), Node("U", NodeKind.LATENT)], [("X", "U")])


def test_indicator_needs_substantive_subject():
    with pytest.raises(GraphError):
        MDag([Node("M_Q", NodeKind.MISS, "Q")], [])
    with pytest.raises(GraphError):
        MDag([Node("X"), Node("M1", NodeKind.MISS, "X"), Node("M2", NodeKind.MISS, "X")], [])


def test_surgery_unknown_node():
    g = dag([("A", "B")])
    with pytest.raises(GraphError):
        g.mutilate(GraphSurgery.over("Q"))


# -- catalog ------------------------------------------------------------------

GOLDEN_MISS_EDGES = {
    "A": {("Z1", "M_X"), ("Z1", "M_Y"), ("Z1", "M_Z2")},
    "B": {("X", "M_Y"), ("X", "M_Z2"), ("Z2", "M_X"), ("Z2", "M_Y")},
    "C": {("X", "M_Y"), ("X", "M_Z2"), ("Z2", "M_X"), ("Z2", "M_Y"), ("Y", "M_X"), ("Y", "M_Z2")},
    "D": {("X", "M_X"), ("Z2", "M_Z2")},
    "E": {("X", "M_X"), ("Z2", "M_Z2"), ("X", "M_Y"), ("X", "M_Z2"), ("Z2", "M_X"), ("Z2", "M_Y")},
    "F": {("X", "M_X"), ("Z2", "M_Z2"), ("Y", "M_X"), ("Y", "M_Z2")},
    "G": {("X", "M_Y"), ("X", "M_Z2"), ("Z2", "M_X"), ("Z2", "M_Y"), ("Y", "M_Y")},
    "H": {("X", "M_Y"), ("X", "M_Z2"), ("Z2", "M_X"), ("Z2", "M_Y"), ("Y", "M_X"),
          ("Y", "M_Z2"), ("Y", "M_Y")},
    "I": {("X", "M_X"), ("Z2", "M_Z2"), ("X", "M_Y"), ("X", "M_Z2"), ("Z2", "M_X"),
          ("Z2", "M_Y"), ("Y", "M_X"), ("Y", "M_Z2")},
    "J": {("X", "M_X"), ("Z2", "M_Z2"), ("X", "M_Y"), ("X", "M_Z2"), ("Z2", "M_X"),
          ("Z2", "M_Y"), ("Y", "M_Y")},
}
SUBSTANTIVE_EDGES = {
    ("U", "Z1"), ("U", "Z2"), ("U", "X"), ("Z1", "X"), ("Z2", "X"),
    ("Z1", "Y"), ("Z2", "Y"), ("X", "Y"),
}


@pytest.mark.parametrize("letter", LETTERS)
def test_golden_edge_table(letter):
    base = GOLDEN_MISS_EDGES["A"]
    extra = GOLDEN_MISS_EDGES[letter] if letter != "A" else set()
    expected = SUBSTANTIVE_EDGES | base | extra
    assert set(edge_table()[letter]) == expected


def test_canonical_A_only_z1_into_indicators():
    g = build_canonical("A", with_W=False, with_U=True)
    into_ind = {
        (a, b) for a, b in g.edges
        if g.kind(b) is NodeKind.MISS and g.kind(a) is NodeKind.SUBSTANTIVE
    }
    assert into_ind == {("Z1", "M_X"), ("Z1", "M_Y"), ("Z1", "M_Z2")}


def test_canonical_self_arrows():
    assert build_canonical("D").has_edge("X", "M_X")
    assert build_canonical("D").has_edge("Z2", "M_Z2")
    assert build_canonical("G").has_edge("Y", "M_Y")


def test_with_W_points_into_every_indicator():
    g = build_canonical("C", with_W=True)
    for m in ("M_X", "M_Y", "M_Z2"):
        assert g.has_edge("W", m)
    assert g.kind("W") is NodeKind.LATENT


def test_group_expansion_and_self_member_parameter():
    g = build_canonical("D", z1=("C1", "C2", "C3"), z2=("C4", "C5"), self_members=("C5",))
    assert g.has_edge("C5", "M_C5") and g.has_edge("C5", "M_C4")
    assert not g.has_edge("C4", "M_C4")
    assert g.groups["Z2"] == ("C4", "C5")


def test_unknown_letter():
    with pytest.raises(ValueError):
        build_canonical("K")


EXPECTED_CLASS = {
    **{L: Classification.RECOVERABLE for L in "ABC"},
    **{L: Classification.NON_RECOVERABLE for L in "DEFIJ"},
    **{L: Classification.CONJECTURED for L in "GH"},
}


@pytest.mark.parametrize("letter", LETTERS)
def test_classification(letter):
    assert classify_canonical(letter) is EXPECTED_CLASS[letter]


@pytest.mark.parametrize("letter", LETTERS)
@pytest.mark.parametrize("with_W", [False, True])
def test_necessary_conditions(letter, with_W):
    v = check_necessary_conditions(build_canonical(letter, with_W=with_W))
    if letter in "ABC":
        if not with_W:
            assert v.status is VerdictStatus.PASSES and v.witness is None
    else:
        assert v.status is VerdictStatus.FAILS_NEIGHBOR


def test_verdict_witnesses():
    assert check_necessary_conditions(build_canonical("D")).witness == "Z2→M_Z2"
    assert check_necessary_conditions(build_canonical("G")).witness == "Y→M_Y"
    assert check_necessary_conditions(build_dprime()).witness == "Z2→M_Z2"
    # the joint fails through X→M_X even though the effect is recoverable
    assert check_necessary_conditions(build_dpp()).witness == "X→M_X"


def test_collider_path_search():
    g = dag([("A", "B"), ("C", "B"), ("C", "D"), ("E", "D")])
    assert _collider_paths(g, "A", "C", lambda n: True) == [["A", "B", "C"]]
    assert _collider_paths(g, "A", "E", lambda n: True) == []
    assert _collider_paths(g, "A", "C", lambda n: n != "B") == []


def test_collider_condition_vacuous_without_indicator_causes():
    # with indicators as sinks for substantive nodes, no collider path can end
    # in an indicator through substantive colliders
    nodes = [Node("X"), Node("S"), Node("M_X", NodeKind.MISS, "X")]
    g = MDag(nodes, [("X", "S"), ("S", "M_X")])
    assert check_necessary_conditions(g).passes


def test_conditional_target_ignores_unconditioned_variables():
    g = build_canonical("G")
    assert check_necessary_conditions(g, Conditional({"Z2", "X"})).passes
    assert not check_necessary_conditions(g, Conditional({"Y"})).passes


# -- enumeration oracle for d-separation --------------------------------------


def _random_dag(rng, k):
    names = [f"V{i}" for i in range(k)]
    edges = [
        (names[i], names[j])
        for i in range(k) for j in range(i + 1, k) if rng.random() < 0.35
    ]
    return dag(edges, names), names


def _joint(g, names, cpts):
    p = np.ones((2,) * len(names))
    pos = {n: i for i, n in enumerate(names)}
    for assignment in itertools.product((0, 1), repeat=len(names)):
        val = 1.0
        for n in names:
            pa = sorted(g.parents(n), key=pos.get)
            p1 = cpts[n][tuple(assignment[pos[u]] for u in pa)]
            val *= p1 if assignment[pos[n]] else 1 - p1
        p[assignment] = val
    return p


def _dependence(p, names, a, b, cond):
    pos = {n: i for i, n in enumerate(names)}
    keep = [pos[a], pos[b]] + [pos[c] for c in cond]
    drop = tuple(i for i in range(len(names)) if i not in keep)
    m = p.sum(axis=drop) if drop else p
    m = np.moveaxis(m, [sorted(keep).index(i) for i in keep], range(len(keep)))
    worst = 0.0
    for c in itertools.product((0, 1), repeat=len(cond)):
        sub = m[(slice(None), slice(None)) + c]
        tot = sub.sum()
        pab = sub / tot
        worst = max(worst, np.abs(pab - np.outer(pab.sum(1), pab.sum(0))).max())
    return worst


def test_dsep_agrees_with_enumeration():
    rng = np.random.default_rng(20240611)
    disagreements = 0
    checked = 0
    for _ in range(100):
        k = int(rng.integers(3, 9))
        g, names = _random_dag(rng, k)
        for _attempt in range(20):
            cpts = {n: rng.uniform(0.05, 0.95, size=(2,) * len(g.parents(n))) for n in names}
            p = _joint(g, names, cpts)
            queries = []
            for _q in range(6):
                a, b = rng.choice(names, 2, replace=False)
                rest = [n for n in names if n not in (a, b)]
                cond = [n for n in rest if rng.random() < 0.3]
                queries.append((a, b, cond, _dependence(p, names, a, b, cond)))
            # re-sample CPTs if a d-connected pair looks independent
            if all(d_separated(g, a, b, c) or dep > 1e-6 for a, b, c, dep in queries):
                break
        for a, b, cond, dep in queries:
            checked += 1
            if d_separated(g, a, b, cond) != (dep < 1e-12):
                disagreements += 1
    assert checked >= 600
    assert disagreements == 0


@st.composite
def graph_and_query(draw):
    k = draw(st.integers(3, 8))
    names = [f"V{i}" for i in range(k)]
    edges = [
        (names[i], names[j])
        for i in range(k) for j in range(i + 1, k) if draw(st.booleans())
    ]
    a, b = draw(st.lists(st.sampled_from(names), min_size=2, max_size=2, unique=True))
    cond = draw(st.lists(st.sampled_from([n for n in names if n not in (a, b)]), unique=True))
    return dag(edges, names), a, b, cond


@settings(max_examples=150, deadline=None)
@given(graph_and_query())
def test_dsep_symmetric(q):
    g, a, b, cond = q
    assert d_separated(g, a, b, cond) == d_separated(g, b, a, cond)


@settings(max_examples=150, deadline=None)
@given(graph_and_query())
def test_removing_edges_never_creates_connection(q):
    g, a, b, cond = q
    if d_separated(g, a, b, cond):
        for n in g.names:
            if n not in cond and n not in (a, b):
                h = g.mutilate(GraphSurgery.over(n))
                assert d_separated(h, a, b, cond)


@settings(max_examples=100, deadline=None)
@given(graph_and_query())
def test_topological_order_respects_edges(q):
    g = q[0]
    order = {n: i for i, n in enumerate(g.topological_order())}
    assert all(order[a] < order[b] for a, b in g.edges)
