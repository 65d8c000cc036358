"""The ten canonical m-DAGs (A-J) of the point-exposure setting, plus the
simplified D' and expanded D'' graphs used by the identification module.

Edge blocks (group edges expand to every member):

=============  ==============================================
block          edges
=============  ==============================================
base           Z1 -> M_X, M_Y, M_Z2
cross_xz       X -> M_Y, M_Z2 ; Z2 -> M_X, M_Y
cross_y        Y -> M_X, M_Z2
self_xz        X -> M_X ; Z2 -> M_Z2
self_y         Y -> M_Y
=============  ==============================================

Letters: A base; B +cross_xz; C +cross_xz+cross_y; D +self_xz;
E +self_xz+cross_xz; F +self_xz+cross_y; G +cross_xz+self_y;
H +cross_xz+cross_y+self_y; I +self_xz+cross_xz+cross_y;
J +self_xz+cross_xz+self_y.  The dashed W arrows point into every indicator.
"""

from __future__ import annotations

from enum import Enum

from .graph import (
    MDag,
    Node,
    NodeKind,
    RecoverabilityVerdict,
    check_necessary_conditions,
)

LETTERS = tuple("ABCDEFGHIJ")

BLOCKS = {
    "A": (),
    "B": ("cross_xz",),
    "C": ("cross_xz", "cross_y"),
    "D": ("self_xz",),
    "E": ("self_xz", "cross_xz"),
    "F": ("self_xz", "cross_y"),
    "G": ("cross_xz", "self_y"),
    "H": ("cross_xz", "cross_y", "self_y"),
    "I": ("self_xz", "cross_xz", "cross_y"),
    "J": ("self_xz", "cross_xz", "self_y"),
}


class Classification(str, Enum):
    RECOVERABLE = "Recoverable"
    NON_RECOVERABLE = "NonRecoverable"
    CONJECTURED = "ConjecturedNonRecoverable"


def miss_name(var: str) -> str:
    return f"M_{var}"


def _check_letter(letter):
    letter = str(letter).upper()
    if letter not in BLOCKS:
        raise ValueError(f"unknown canonical m-DAG {letter!r}; expected one of A..J")
    return letter


def missingness_parents(letter, z1=("Z1",), z2=("Z2",), x="X", y="Y", self_members=None):
    """Substantive parents of each indicator's subject, keyed by subject.

    ``self_members`` restricts which Z2 members carry the Z2 -> M_Z2 arrows
    (default: all of them).
    """
    letter = _check_letter(letter)
    blocks = BLOCKS[letter]
    z1, z2 = tuple(z1), tuple(z2)
    self_members = tuple(z2 if self_members is None else self_members)
    unknown = set(self_members) - set(z2)
    if unknown:
        raise ValueError(f"self_members {sorted(unknown)} are not Z2 members")
    pa = {v: list(z1) for v in (*z2, x, y)}
    if "cross_xz" in blocks:
        for v in z2:
            pa[v].append(x)
        pa[y] += [x, *z2]
        pa[x] += list(z2)
    if "cross_y" in blocks:
        pa[x].append(y)
        for v in z2:
            pa[v].append(y)
    if "self_xz" in blocks:
        pa[x].append(x)
        for v in z2:
            pa[v] += list(self_members)
    if "self_y" in blocks:
        pa[y].append(y)
    # de-duplicate, keep order
    return {v: tuple(dict.fromkeys(p)) for v, p in pa.items()}


def _substantive_block(z1, z2, x, y, with_U, extra_conf=()):
    conf = (*z1, *z2, *extra_conf)
    nodes = [Node(n) for n in (*conf, x, y)]
    edges = [(c, x) for c in conf] + [(c, y) for c in conf] + [(x, y)]
    if with_U:
        nodes.insert(0, Node("U", NodeKind.LATENT))
        edges += [("U", c) for c in conf] + [("U", x)]
    else:
        # sequential dependence among confounders stands in for U
        edges += [(a, b) for i, a in enumerate(conf) for b in conf[i + 1:]]
    return nodes, edges


def build_canonical(
    letter,
    with_W: bool = False,
    with_U: bool = True,
    z1=("Z1",),
    z2=("Z2",),
    x="X",
    y="Y",
    self_members=None,
) -> MDag:
    """Canonical m-DAG ``letter``; ``z1``/``z2`` name the members of the
    complete and incomplete confounder groups."""
    pa = missingness_parents(letter, z1, z2, x, y, self_members)
    nodes, edges = _substantive_block(tuple(z1), tuple(z2), x, y, with_U)
    for v in pa:
        nodes.append(Node(miss_name(v), NodeKind.MISS, subject=v))
        edges += [(p, miss_name(v)) for p in pa[v]]
    if with_W:
        nodes.append(Node("W", NodeKind.LATENT))
        edges += [("W", miss_name(v)) for v in pa]
    return MDag(nodes, edges, groups={"Z1": tuple(z1), "Z2": tuple(z2)})


def build_dprime(with_U: bool = False) -> MDag:
    """Simplified D': one binary confounder Z2 that causes its own missingness."""
    nodes, edges = _substantive_block((), ("Z2",), "X", "Y", with_U)
    nodes.append(Node("M_Z2", NodeKind.MISS, subject="Z2"))
    edges.append(("Z2", "M_Z2"))
    return MDag(nodes, edges)


def build_dpp(with_U: bool = True, z1=("Z1",), z2=("Z2",), z3=("Z3",), x="X", y="Y") -> MDag:
    """Expanded D'': missingness of each incomplete confounder group is caused
    by the other group, never by itself."""
    z1, z2, z3 = tuple(z1), tuple(z2), tuple(z3)
    nodes, edges = _substantive_block(z1, z2, x, y, with_U, extra_conf=z3)
    pa = {x: (*z1, x), y: z1}
    for v in z2:
        pa[v] = (*z1, *z3)
    for v in z3:
        pa[v] = (*z1, *z2)
    for v, parents in pa.items():
        nodes.append(Node(miss_name(v), NodeKind.MISS, subject=v))
        edges += [(p, miss_name(v)) for p in parents]
    return MDag(nodes, edges, groups={"Z1": z1, "Z2": z2, "Z3": z3})


def edge_table(with_W=False, with_U=True) -> dict:
    """Sorted edge list per letter (the golden catalog)."""
    return {
        L: sorted(build_canonical(L, with_W=with_W, with_U=with_U).edges)
        for L in LETTERS
    }


def classify_canonical(letter) -> Classification:
    """Recoverability of the ACE in the no-W canonical graph.

    A, B and C have explicit recovery formulas. D is non-recoverable; any
    letter whose edge set contains D's inherits that (adding edges never
    restores recoverability). G is conjectured non-recoverable, and so is
    anything built on G that does not contain D.
    """
    letter = _check_letter(letter)
    if letter in ("A", "B", "C"):
        return Classification.RECOVERABLE
    edges = build_canonical(letter).edges
    if build_canonical("D").edges <= edges:
        return Classification.NON_RECOVERABLE
    if build_canonical("G").edges <= edges:
        return Classification.CONJECTURED
    raise AssertionError(f"letter {letter} is not covered by the closure rules")


def canonical_verdict(letter) -> RecoverabilityVerdict:
    return check_necessary_conditions(build_canonical(letter))
