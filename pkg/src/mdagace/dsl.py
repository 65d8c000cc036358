"""Tiny text format for user-defined m-DAGs.

::

    # comments run to end of line
    node X kind=substantive;
    latent U;
    miss M_X of X;
    U -> X -> Y;
    X -> M_X;

Nodes used in edges without a declaration are taken to be substantive.
"""

from __future__ import annotations

import re

from .graph import CycleError, GraphError, MDag, Node, NodeKind

_NAME = r"[A-Za-z_][A-Za-z0-9_.']*"
_NODE_RE = re.compile(rf"^node\s+({_NAME})(?:\s+kind\s*=\s*(\w+))?$")
_LATENT_RE = re.compile(rf"^latent\s+({_NAME})$")
_MISS_RE = re.compile(rf"^miss\s+({_NAME})\s+of\s+({_NAME})$")
_EDGE_RE = re.compile(rf"^{_NAME}(\s*->\s*{_NAME})+$")

_KINDS = {
    "substantive": NodeKind.SUBSTANTIVE,
    "latent": NodeKind.LATENT,
}


class DslError(GraphError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


def _statements(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for part in line.split(";"):
            part = part.strip()
            if part:
                yield lineno, part


def parse_mdag(text: str) -> MDag:
    declared: dict[str, tuple[Node, int]] = {}
    edges: list[tuple[str, str, int]] = []

    def declare(node, lineno):
        if node.name in declared:
            raise DslError(
                lineno,
                f"duplicate node {node.name!r} (first declared on line "
                f"{declared[node.name][1]})",
            )
        declared[node.name] = (node, lineno)

    for lineno, stmt in _statements(text):
        if m := _NODE_RE.match(stmt):
            kind = (m.group(2) or "substantive").lower()
            if kind not in _KINDS:
                raise DslError(lineno, f"unknown node kind {kind!r}")
            declare(Node(m.group(1), _KINDS[kind]), lineno)
        elif m := _LATENT_RE.match(stmt):
            declare(Node(m.group(1), NodeKind.LATENT), lineno)
        elif m := _MISS_RE.match(stmt):
            declare(Node(m.group(1), NodeKind.MISS, subject=m.group(2)), lineno)
        elif _EDGE_RE.match(stmt):
            names = [s.strip() for s in stmt.split("->")]
            edges += [(a, b, lineno) for a, b in zip(names, names[1:])]
        else:
            raise DslError(lineno, f"cannot parse statement {stmt!r}")

    first_use = {}
    for a, b, lineno in edges:
        for n in (a, b):
            first_use.setdefault(n, lineno)
    for n, lineno in first_use.items():
        if n not in declared:
            declared[n] = (Node(n), lineno)
    for node, lineno in declared.values():
        if node.kind is NodeKind.MISS and node.subject not in declared:
            raise DslError(lineno, f"indicator {node.name} refers to unknown {node.subject!r}")

    edge_line = {(a, b): ln for a, b, ln in edges}
    try:
        return MDag([n for n, _ in declared.values()], list(edge_line))
    except CycleError as err:
        closing = list(zip(err.cycle, err.cycle[1:]))
        line = max(edge_line.get(e, 0) for e in closing) if closing else 0
        raise DslError(line, str(err)) from err
    except GraphError as err:
        # attribute to the first edge mentioning an offending node, if any
        line = next(
            (ln for (a, b), ln in edge_line.items() if a in str(err) or b in str(err)),
            0,
        )
        raise DslError(line, str(err)) from err


def format_mdag(g: MDag) -> str:
    lines = []
    for name, node in g.nodes.items():
        if node.kind is NodeKind.MISS:
            lines.append(f"miss {name} of {node.subject};")
        elif node.kind is NodeKind.LATENT:
            lines.append(f"latent {name};")
        else:
            lines.append(f"node {name} kind=substantive;")
    for a, b in sorted(g.edges):
        lines.append(f"{a} -> {b};")
    return "\n".join(lines) + "\n"
