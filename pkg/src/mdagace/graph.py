"""Missingness DAGs: node kinds, graph surgery, d-separation and the
graphical necessary conditions for recoverability.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional


class GraphError(ValueError):
    """Raised for malformed graphs (cycles, bad indicator wiring, ...)."""


class CycleError(GraphError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("graph contains the cycle " + " -> ".join(self.cycle))


class NodeKind(str, Enum):
    SUBSTANTIVE = "substantive"
    MISS = "miss"
    LATENT = "latent"


@dataclass(frozen=True)
class Node:
    name: str
    kind: NodeKind = NodeKind.SUBSTANTIVE
    subject: Optional[str] = None  # only for MISS nodes


@dataclass(frozen=True)
class GraphSurgery:
    """Nodes whose incoming / outgoing arrows are deleted."""

    removed_incoming: frozenset = frozenset()
    removed_outgoing: frozenset = frozenset()

    @classmethod
    def none(cls) -> "GraphSurgery":
        return cls()

    @classmethod
    def over(cls, *nodes) -> "GraphSurgery":
        return cls(removed_incoming=frozenset(nodes))

    @classmethod
    def under(cls, *nodes) -> "GraphSurgery":
        return cls(removed_outgoing=frozenset(nodes))


class MDag:
    """Immutable m-DAG over substantive, indicator and latent nodes.

    ``groups`` optionally records vector nodes (e.g. ``Z2 -> (C4, C5)``); the
    edges themselves are always stored member-wise.
    """

    def __init__(self, nodes: Iterable[Node], edges: Iterable[tuple], groups=None):
        self._nodes: dict[str, Node] = {}
        for node in nodes:
            if node.name in self._nodes:
                raise GraphError(f"duplicate node name {node.name!r}")
            self._nodes[node.name] = node
        self._edges = frozenset((str(a), str(b)) for a, b in edges)
        self._parents = {n: set() for n in self._nodes}
        self._children = {n: set() for n in self._nodes}
        for a, b in self._edges:
            if a not in self._nodes or b not in self._nodes:
                raise GraphError(f"edge {a} -> {b} references an unknown node")
            if a == b:
                raise CycleError([a, a])
            self._parents[b].add(a)
            self._children[a].add(b)
        self.groups = {k: tuple(v) for k, v in (groups or {}).items()}
        self._validate()
        self._order = self._topological_sort()

    # -- construction checks -------------------------------------------------
    def _validate(self):
        subjects = {}
        for node in self._nodes.values():
            if node.kind is NodeKind.MISS:
                subj = self._nodes.get(node.subject)
                if subj is None or subj.kind is not NodeKind.SUBSTANTIVE:
                    raise GraphError(
                        f"indicator {node.name} must reference a substantive node"
                    )
                if node.subject in subjects:
                    raise GraphError(f"{node.subject} has two missingness indicators")
                subjects[node.subject] = node.name
            elif node.subject is not None:
                raise GraphError(f"only indicators may carry a subject ({node.name})")
        for a, b in self._edges:
            if (
                self._nodes[a].kind is NodeKind.MISS
                and self._nodes[b].kind is NodeKind.SUBSTANTIVE
            ):
                raise GraphError(f"indicator {a} cannot cause substantive node {b}")
            if self._nodes[b].kind is NodeKind.LATENT:
                raise GraphError(f"latent node {b} cannot have parents")
        self._proxy = subjects

    def _topological_sort(self):
        indeg = {n: len(p) for n, p in self._parents.items()}
        # stable: ties resolved by insertion order
        rank = {n: i for i, n in enumerate(self._nodes)}
        ready = sorted((n for n, d in indeg.items() if d == 0), key=rank.get)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in sorted(self._children[n], key=rank.get):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort(key=rank.get)
        if len(order) != len(self._nodes):
            raise CycleError(self._find_cycle())
        return tuple(order)

    def _find_cycle(self):
        state = {}
        stack = []

        def visit(n):
            state[n] = 1
            stack.append(n)
            for c in sorted(self._children[n]):
                if state.get(c) == 1:
                    return stack[stack.index(c):] + [c]
                if c not in state:
                    found = visit(c)
                    if found:
                        return found
            state[n] = 2
            stack.pop()
            return None

        for n in self._nodes:
            if n not in state:
                found = visit(n)
                if found:
                    return found
        return []

    # -- accessors -------------------------------------------------------------
    @property
    def nodes(self) -> dict:
        return dict(self._nodes)

    @property
    def names(self) -> tuple:
        return tuple(self._nodes)

    @property
    def edges(self) -> frozenset:
        return self._edges

    @property
    def proxy(self) -> dict:
        """Map incomplete substantive node -> its indicator."""
        return dict(self._proxy)

    def kind(self, name) -> NodeKind:
        return self._nodes[name].kind

    def parents(self, name) -> frozenset:
        return frozenset(self._parents[name])

    def children(self, name) -> frozenset:
        return frozenset(self._children[name])

    def topological_order(self) -> tuple:
        return self._order

    def incomplete(self) -> tuple:
        return tuple(n for n in self._nodes if n in self._proxy)

    def of_kind(self, kind: NodeKind) -> tuple:
        return tuple(n for n, v in self._nodes.items() if v.kind is kind)

    def ancestors(self, names) -> set:
        seen = set()
        todo = list(names)
        while todo:
            n = todo.pop()
            for p in self._parents[n]:
                if p not in seen:
                    seen.add(p)
                    todo.append(p)
        return seen

    def has_edge(self, a, b) -> bool:
        return (a, b) in self._edges

    def adjacent(self, a, b) -> bool:
        return (a, b) in self._edges or (b, a) in self._edges

    def mutilate(self, surgery: GraphSurgery) -> "MDag":
        for n in surgery.removed_incoming | surgery.removed_outgoing:
            if n not in self._nodes:
                raise GraphError(f"surgery references unknown node {n!r}")
        edges = [
            (a, b)
            for a, b in self._edges
            if b not in surgery.removed_incoming and a not in surgery.removed_outgoing
        ]
        return MDag(self._nodes.values(), edges, self.groups)

    def with_edges(self, extra) -> "MDag":
        return MDag(self._nodes.values(), set(self._edges) | set(extra), self.groups)

    def __eq__(self, other):
        return (
            isinstance(other, MDag)
            and self._nodes == other._nodes
            and self._edges == other._edges
        )

    def __hash__(self):
        return hash((tuple(sorted(self._nodes)), self._edges))

    def __repr__(self):
        parts = []
        for n in self._order:
            pa = sorted(self._parents[n])
            parts.append(f"[{n}|{','.join(pa)}]" if pa else f"[{n}]")
        return "MDag(" + "".join(parts) + ")"


def _as_set(x) -> frozenset:
    if isinstance(x, str):
        return frozenset([x])
    return frozenset(x)


def d_separated(g: MDag, a, b, cond=(), surgery: GraphSurgery = GraphSurgery()) -> bool:
    """True iff ``a`` and ``b`` are d-separated given ``cond`` in ``g`` after surgery.

    Reachability ("Bayes ball") over (node, direction) states; linear in the
    number of edges.
    """
    a, b, cond = _as_set(a), _as_set(b), _as_set(cond)
    if a & b or a & cond or b & cond:
        raise ValueError("node sets passed to d_separated must be disjoint")
    for n in a | b | cond:
        if n not in g.nodes:
            raise GraphError(f"unknown node {n!r}")
    if surgery.removed_incoming or surgery.removed_outgoing:
        g = g.mutilate(surgery)
    return not (reachable(g, a, cond) & b)


def reachable(g: MDag, sources, cond) -> set:
    """Nodes d-connected to ``sources`` given ``cond``."""
    cond = set(cond)
    # ancestors of the conditioning set (incl. itself) open colliders
    anc_cond = set(cond) | g.ancestors(cond)
    visited = set()
    found = set()
    # direction "up": arrived from a child; "down": arrived from a parent
    queue = deque((s, "up") for s in sources)
    while queue:
        node, direction = queue.popleft()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node not in cond:
            found.add(node)
        if direction == "up" and node not in cond:
            for p in g.parents(node):
                queue.append((p, "up"))
            for c in g.children(node):
                queue.append((c, "down"))
        elif direction == "down":
            if node not in cond:
                for c in g.children(node):
                    queue.append((c, "down"))
            if node in anc_cond:
                for p in g.parents(node):
                    queue.append((p, "up"))
    return found - set(sources)


# -- necessary conditions for recoverability --------------------------------


class VerdictStatus(str, Enum):
    PASSES = "PassesNecessaryConditions"
    FAILS_NEIGHBOR = "FailsNeighborCondition"
    FAILS_COLLIDER_PATH = "FailsColliderPathCondition"


@dataclass(frozen=True)
class RecoverabilityVerdict:
    status: VerdictStatus
    witness: Optional[str] = None

    def __post_init__(self):
        if (self.status is VerdictStatus.PASSES) != (self.witness is None):
            raise ValueError("a witness is required exactly when the check fails")

    @property
    def passes(self) -> bool:
        return self.status is VerdictStatus.PASSES


@dataclass(frozen=True)
class JointDistribution:
    pass


@dataclass(frozen=True)
class Conditional:
    given: frozenset = field(default_factory=frozenset)

    def __init__(self, given=()):
        object.__setattr__(self, "given", _as_set(given))


def _collider_paths(g: MDag, start, end, allowed):
    """Simple paths start ... end whose every intermediate node is a collider
    on the path and satisfies ``allowed``."""

    def neighbours(n):
        for p in g.parents(n):
            yield p, "in"  # edge p -> n, i.e. arrowhead at n
        for c in g.children(n):
            yield c, "out"

    out = []
    stack = [(start, [start], None)]
    while stack:
        node, path, head_at_node = stack.pop()
        for nxt, kind in neighbours(node):
            if nxt in path:
                continue
            # kind == "out": node -> nxt, arrowhead at nxt
            arrow_into_next = kind == "out"
            if node != start:
                # node is intermediate: must be a collider, so both the edge we
                # arrived on and the edge we leave on point into node
                if not (head_at_node and kind == "in"):
                    continue
            if nxt == end:
                if len(path) > 1:
                    out.append(path + [nxt])
                continue
            if not allowed(nxt) or not arrow_into_next:
                continue
            stack.append((nxt, path + [nxt], True))
    return out


def check_necessary_conditions(g: MDag, target=JointDistribution()) -> RecoverabilityVerdict:
    """Graphical necessary conditions for recoverability.

    Passing does not establish recoverability.
    """
    proxy = g.proxy
    if isinstance(target, Conditional):
        variables = [v for v in g.incomplete() if v in target.given]
        allowed = lambda n: n in target.given  # noqa: E731
    else:
        variables = list(g.incomplete())
        allowed = lambda n: g.kind(n) is NodeKind.SUBSTANTIVE  # noqa: E731
    for v in variables:
        m = proxy[v]
        if g.has_edge(v, m):
            return RecoverabilityVerdict(VerdictStatus.FAILS_NEIGHBOR, f"{v}→{m}")
        if g.has_edge(m, v):
            return RecoverabilityVerdict(VerdictStatus.FAILS_NEIGHBOR, f"{m}→{v}")
    for v in variables:
        paths = _collider_paths(g, v, proxy[v], allowed)
        if paths:
            return RecoverabilityVerdict(
                VerdictStatus.FAILS_COLLIDER_PATH, " - ".join(min(paths, key=len))
            )
    return RecoverabilityVerdict(VerdictStatus.PASSES)
