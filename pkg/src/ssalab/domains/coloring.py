"""Graph coloring domain with forward-checking propagation."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from ..errors import InvalidParams, ResourceLimit


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    edges: tuple
    num_colors: int = 4

    def __post_init__(self):
        norm = set()
        for u, v in self.edges:
            if u == v:
                raise InvalidParams(f"self-loop on node {u}")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise InvalidParams(f"edge ({u}, {v}) out of range")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        if self.num_colors < 1:
            raise InvalidParams("need at least one color")

    @cached_property
    def neighbors(self) -> tuple:
        adj = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)


@dataclass(frozen=True)
class GcEvidence:
    node: Optional[int]
    conflict_node: Optional[int]


class ColoringAdapter:
    """Colors are integers 0..k-1; a node's domain is the set of colors
    unused by its colored neighbors.  Conflict = some open domain empty."""

    domain_name = "gc"

    def __init__(self, graph: Graph):
        self.graph = graph
        self.k = graph.num_colors
        self._sat: Optional[bool] = None

    @property
    def variables(self):
        return range(self.graph.num_nodes)

    def values_for(self, assignment: dict, node: int) -> tuple:
        used = {assignment[u] for u in self.graph.neighbors[node] if u in assignment}
        return tuple(c for c in range(self.k) if c not in used)

    def domains(self, assignment: dict) -> dict:
        return {u: self.values_for(assignment, u) for u in range(self.graph.num_nodes) if u not in assignment}

    def selectable(self, state) -> list:
        return [u for u in range(self.graph.num_nodes) if u not in state.assignment and state.domains.get(u)]

    def propagate(self, assignment: dict, trigger):
        conflict = None
        for u in range(self.graph.num_nodes):
            if u not in assignment and not self.values_for(assignment, u):
                conflict = u
                break
        return [], conflict, GcEvidence(trigger, conflict)

    def conflict_levels(self, state) -> set:
        entries = {e.var: e for e in state.trail}
        return {entries[u].level for u in self.graph.neighbors[state.conflict]
                if u in entries and entries[u].level > 0}

    def is_goal(self, state) -> bool:
        if state.conflict is not None or len(state.assignment) < self.graph.num_nodes:
            return False
        a = state.assignment
        return all(a[u] != a[v] for u, v in self.graph.edges)

    def is_satisfiable(self) -> bool:
        if self._sat is None:
            self._sat = gc_oracle(self.graph) is not None
        return self._sat

    def state_key(self, state):
        return frozenset(state.assignment.items())


def is_proper(graph: Graph, coloring: dict) -> bool:
    return all(coloring[u] != coloring[v] for u, v in graph.edges)


def gc_oracle(graph: Graph, assignment: Optional[dict] = None, node_cap: int = 2_000_000) -> Optional[dict]:
    """Exact k-colorability by backtracking with most-constrained-node order."""
    nodes = [0]
    adj = graph.neighbors

    def solve(a):
        nodes[0] += 1
        if nodes[0] > node_cap:
            raise ResourceLimit("coloring oracle node cap exceeded")
        best, best_dom = None, None
        for u in range(graph.num_nodes):
            if u in a:
                continue
            dom = [c for c in range(graph.num_colors) if all(a.get(w) != c for w in adj[u])]
            if not dom:
                return None
            if best is None or len(dom) < len(best_dom):
                best, best_dom = u, dom
        if best is None:
            return a
        for c in best_dom:
            a[best] = c
            res = solve(a)
            if res is not None:
                return res
            del a[best]
        return None

    start = dict(assignment or {})
    if any(start.get(u) is not None and start.get(u) == start.get(v) for u, v in graph.edges):
        return None
    res = solve(start)
    return dict(res) if res is not None else None


def random_graph(n: int, p: float, num_colors: int = 4, rng=None) -> Graph:
    """Erdos-Renyi G(n, p)."""
    if n < 1 or not 0 <= p <= 1:
        raise InvalidParams("need n >= 1 and p in [0, 1]")
    rng = rng if rng is not None else np.random.default_rng()
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return Graph(n, tuple(zip(iu[keep].tolist(), ju[keep].tolist())), num_colors)


def planted_graph(n: int, p: float, num_colors: int = 4, rng=None):
    """G(n, p) restricted to pairs across a hidden coloring; returns (graph, coloring)."""
    if n < 1 or not 0 <= p <= 1:
        raise InvalidParams("need n >= 1 and p in [0, 1]")
    rng = rng if rng is not None else np.random.default_rng()
    hidden = {u: int(c) for u, c in enumerate(rng.integers(0, num_colors, size=n))}
    iu, ju = np.triu_indices(n, k=1)
    keep = (rng.random(len(iu)) < p) & np.array([hidden[a] != hidden[b] for a, b in zip(iu, ju)], dtype=bool)
    return Graph(n, tuple(zip(iu[keep].tolist(), ju[keep].tolist())), num_colors), hidden


def cycle_graph(n: int, num_colors: int = 4) -> Graph:
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)), num_colors)
