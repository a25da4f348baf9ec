"""Text formats: DIMACS CNF, graph edge lists, parenthesized trees."""
from __future__ import annotations

import re

from ..errors import InvalidParams
from .coloring import Graph
from .sat import Cnf
from .trees import Tree


def cnf_to_dimacs(cnf: Cnf) -> str:
    lines = [f"p cnf {cnf.num_vars} {len(cnf.clauses)}"]
    lines += [" ".join(str(l) for l in c) + " 0" for c in cnf.clauses]
    return "\n".join(lines) + "\n"


def cnf_from_dimacs(text: str) -> Cnf:
    n = None
    clauses, cur = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise InvalidParams(f"bad DIMACS header: {line!r}")
            n = int(parts[2])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                clauses.append(cur)
                cur = []
            else:
                cur.append(lit)
    if cur:
        clauses.append(cur)
    if n is None:
        raise InvalidParams("missing 'p cnf' header")
    return Cnf.from_lists(n, clauses)


def graph_to_text(g: Graph) -> str:
    lines = [f"{g.num_nodes} {len(g.edges)} {g.num_colors}"]
    lines += [f"{u} {v}" for u, v in g.edges]
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> Graph:
    rows = [l.split() for l in text.splitlines() if l.strip() and not l.startswith("#")]
    if not rows or len(rows[0]) not in (2, 3):
        raise InvalidParams("edge list needs a 'nodes edges [colors]' header")
    n, m = int(rows[0][0]), int(rows[0][1])
    k = int(rows[0][2]) if len(rows[0]) == 3 else 4
    edges = tuple((int(a), int(b)) for a, b in rows[1:])
    if len(edges) != m:
        raise InvalidParams(f"header promises {m} edges, found {len(edges)}")
    return Graph(n, edges, k)


def tree_to_text(t: Tree) -> str:
    def rec(u):
        kids = t.kids(u)
        return f"({u}" + "".join(" " + rec(c) for c in kids) + ")"
    return rec(t.root)


def tree_from_text(text: str) -> Tree:
    toks = re.findall(r"\(|\)|-?\d+", text)
    pos = 0
    children: dict = {}

    def rec():
        nonlocal pos
        if toks[pos] != "(":
            raise InvalidParams("expected '('")
        pos += 1
        u = int(toks[pos])
        pos += 1
        kids = []
        while toks[pos] == "(":
            kids.append(rec())
        if toks[pos] != ")":
            raise InvalidParams("expected ')'")
        pos += 1
        if kids:
            children[u] = tuple(kids)
        return u

    try:
        root = rec()
    except IndexError as exc:
        raise InvalidParams("unbalanced tree text") from exc
    if pos != len(toks):
        raise InvalidParams("trailing tokens after tree")
    return Tree(root, children)
