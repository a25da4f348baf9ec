"""Domain adapters, generators and exact oracles."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidParams
from .coloring import ColoringAdapter, GcEvidence, Graph, cycle_graph, gc_oracle, planted_graph, random_graph
from .peg import PegAdapter, PegTask, random_expression, reference_parse
from .sat import (Cnf, SatAdapter, SatEvidence, brute_force_unit_fixpoint, example1_cnf, planted_3sat,
                  random_3sat, sat_oracle)
from .trees import Tree, chain_tree, random_tree, reference_traversal, star_tree


def generate_instance(domain: str, params: dict, seed: int):
    """Deterministic instance per (domain, params, seed).

    Domains: sat-planted, sat-random, gc, gc-planted, tree, star-tree, peg.
    """
    rng = np.random.default_rng(seed)
    p = dict(params)
    if domain == "sat-planted":
        return planted_3sat(int(p.get("n", 50)), float(p.get("alpha", 4.0)), rng)[0]
    if domain == "sat-random":
        return random_3sat(int(p.get("n", 50)), float(p.get("alpha", 4.26)), rng, p.get("satisfiable"))
    if domain == "gc":
        return random_graph(int(p.get("n", 30)), float(p.get("p", 0.35)), int(p.get("k", 4)), rng)
    if domain == "gc-planted":
        return planted_graph(int(p.get("n", 30)), float(p.get("p", 0.35)), int(p.get("k", 4)), rng)[0]
    if domain == "tree":
        return random_tree(int(p.get("nodes", 20)), tuple(p.get("branching", (2, 3, 4))), rng, p.get("id_pool"))
    if domain == "star-tree":
        return star_tree(int(p.get("k", 4)), rng, p.get("id_pool"))
    if domain == "peg":
        return random_expression(int(p.get("length", 8)), rng, bool(p.get("valid", True)))
    raise InvalidParams(f"unknown domain {domain!r}")


def make_adapter(instance, **kw):
    if isinstance(instance, Cnf):
        return SatAdapter(instance, **kw)
    if isinstance(instance, Graph):
        return ColoringAdapter(instance)
    if isinstance(instance, PegTask):
        return PegAdapter(instance)
    raise InvalidParams(f"no search adapter for {type(instance).__name__}")


def oracle_solve(instance, assignment=None, node_cap: int = 2_000_000):
    """Exact verdict: (satisfiable, witness or None).

    With ``assignment`` the verdict is the viability of that partial state.
    """
    if isinstance(instance, Cnf):
        w = sat_oracle(instance, assignment, node_cap)
    elif isinstance(instance, Graph):
        w = gc_oracle(instance, assignment, node_cap)
    elif isinstance(instance, PegTask):
        ok = reference_parse(instance)
        return ok, None
    else:
        raise InvalidParams(f"no oracle for {type(instance).__name__}")
    return w is not None, w


def state_viable(adapter, state, node_cap: int = 2_000_000) -> bool:
    """A state is viable iff it has a satisfying descendant."""
    if state.conflict is not None:
        return False
    if isinstance(adapter, SatAdapter):
        return sat_oracle(adapter.cnf, state.assignment, node_cap) is not None
    if isinstance(adapter, ColoringAdapter):
        return gc_oracle(adapter.graph, state.assignment, node_cap) is not None
    raise InvalidParams(f"viability not supported for {type(adapter).__name__}")


__all__ = [
    "Cnf", "SatAdapter", "SatEvidence", "Graph", "ColoringAdapter", "GcEvidence", "PegTask", "PegAdapter",
    "Tree", "generate_instance", "make_adapter", "oracle_solve", "state_viable", "example1_cnf",
    "planted_3sat", "random_3sat", "random_graph", "planted_graph", "cycle_graph", "random_tree", "star_tree",
    "chain_tree", "reference_traversal", "reference_parse", "random_expression", "sat_oracle", "gc_oracle",
    "brute_force_unit_fixpoint",
]
