"""Rule-based branching policies.

A policy is a callable ``policy(state, adapter, rng) -> Action`` that only
proposes branch actions; backtracking belongs to the verifier.
"""
from __future__ import annotations

import numpy as np

from ..domains.coloring import ColoringAdapter
from ..domains.sat import SatAdapter, lit_value
from .core import Action


def sat_occurrences(state, adapter: SatAdapter) -> dict:
    """(positive, negative) occurrence counts per open variable among unsatisfied clauses."""
    counts = {v: [0, 0] for v in adapter.selectable(state)}
    a = state.assignment
    for c in adapter.cnf.clauses:
        if any(lit_value(l, a) for l in c):
            continue
        for l in c:
            v = abs(l) - 1
            if v in counts:
                counts[v][0 if l > 0 else 1] += 1
    return counts


def heuristic_scores(state, adapter) -> dict:
    """Score per selectable variable plus its preferred value ordering."""
    out = {}
    if isinstance(adapter, SatAdapter):
        for v, (pos, neg) in sat_occurrences(state, adapter).items():
            out[v] = (float(pos + neg), (True, False) if pos >= neg else (False, True))
    elif isinstance(adapter, ColoringAdapter):
        a = state.assignment
        for u in adapter.selectable(state):
            open_deg = sum(1 for w in adapter.graph.neighbors[u] if w not in a)
            out[u] = (-10.0 * len(state.domains[u]) + open_deg, tuple(state.domains[u]))
    else:
        for v in adapter.selectable(state):
            out[v] = (0.0, tuple(state.domains[v]))
    return out


def exhaustive_policy(state, adapter, rng=None) -> Action:
    """Lowest-index selectable variable, first value in domain order."""
    v = min(adapter.selectable(state))
    return Action.branch(v, state.domains[v][0])


def occurrence_domain_policy(state, adapter, rng=None) -> Action:
    """Most occurrences in unsatisfied clauses (SAT) or smallest domain (GC)."""
    scores = heuristic_scores(state, adapter)
    v = max(scores, key=lambda k: (scores[k][0], -k))
    values = [x for x in scores[v][1] if x in state.domains[v]]
    return Action.branch(v, values[0])


def random_policy(state, adapter, rng) -> Action:
    sel = adapter.selectable(state)
    v = sel[int(rng.integers(len(sel)))]
    dom = state.domains[v]
    return Action.branch(v, dom[int(rng.integers(len(dom)))])


class VsidsPolicy:
    """Activity-ordered branching with domain-size tie breaking.

    Activities of variables in each conflict are bumped and all activities
    decay geometrically, as in VSIDS.
    """

    def __init__(self, decay: float = 0.95):
        self.decay = decay
        self.activity: dict = {}

    def on_conflict(self, state, adapter) -> None:
        if state.conflict is None:
            return
        for k in self.activity:
            self.activity[k] *= self.decay
        if isinstance(adapter, SatAdapter):
            vs = [abs(l) - 1 for l in adapter.cnf.clauses[state.conflict]]
        elif isinstance(adapter, ColoringAdapter):
            vs = [state.conflict, *adapter.graph.neighbors[state.conflict]]
        else:
            vs = []
        for v in vs:
            self.activity[v] = self.activity.get(v, 0.0) + 1.0

    def __call__(self, state, adapter, rng=None) -> Action:
        scores = heuristic_scores(state, adapter)
        v = max(scores, key=lambda k: (self.activity.get(k, 0.0), scores[k][0], -k))
        values = [x for x in scores[v][1] if x in state.domains[v]]
        return Action.branch(v, values[0])


class TopKSampler:
    """Temperature sampling over the heuristic's top-k variables.

    Used for stochastic rollouts; the value follows the heuristic's
    preferred polarity with probability proportional to exp(score / T).
    """

    def __init__(self, k: int = 3, temperature: float = 1.0):
        self.k = k
        self.temperature = temperature

    def __call__(self, state, adapter, rng) -> Action:
        scores = heuristic_scores(state, adapter)
        ranked = sorted(scores, key=lambda v: (-scores[v][0], v))[: self.k]
        s = np.array([scores[v][0] for v in ranked]) / max(self.temperature, 1e-8)
        p = np.exp(s - s.max())
        p /= p.sum()
        v = ranked[int(rng.choice(len(ranked), p=p))]
        values = [x for x in scores[v][1] if x in state.domains[v]]
        if len(values) > 1 and rng.random() < 0.25:
            values = values[1:]
        return Action.branch(v, values[0])


POLICIES = {
    "exhaustive": lambda: exhaustive_policy,
    "occurrence": lambda: occurrence_domain_policy,
    "random": lambda: random_policy,
    "vsids": VsidsPolicy,
    "topk": TopKSampler,
}


def make_policy(name: str):
    from ..errors import InvalidParams
    if name not in POLICIES:
        raise InvalidParams(f"unknown policy {name!r}")
    return POLICIES[name]()
