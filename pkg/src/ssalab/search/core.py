"""Domain-agnostic backtracking search engine.

A search state is an assignment plus a trail of (variable, value, level,
forced) entries.  Adapters supply propagation, domains and conflict
analysis; this module owns decision levels, tried values and backjumping.

Backjumping follows conflict-directed backjumping (CBJ): each decision
level accumulates the set of lower levels responsible for refuting its
values, so jumping past a level is sound.  Verifier-induced backtracks
carry no conflict evidence and fall back to chronological order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from ..errors import InadmissibleAction

EXHAUSTED = -1


@dataclass(frozen=True)
class TrailEntry:
    var: Any
    value: Any
    level: int
    forced: bool = False
    reason: Any = None


@dataclass
class SearchState:
    assignment: dict
    domains: dict
    trail: tuple
    level: int = 0
    tried: dict = field(default_factory=dict)
    conflict: Any = None
    evidence: Any = None
    conf_sets: dict = field(default_factory=dict)

    def decision(self, level: int) -> Optional[TrailEntry]:
        for e in self.trail:
            if e.level == level and not e.forced:
                return e
        return None

    def entry(self, var) -> Optional[TrailEntry]:
        for e in self.trail:
            if e.var == var:
                return e
        return None

    @property
    def depth(self) -> int:
        return self.level


@dataclass(frozen=True)
class Action:
    kind: str  # "branch" | "backtrack"
    var: Any = None
    value: Any = None

    @staticmethod
    def branch(var, value) -> "Action":
        return Action("branch", var, value)

    @staticmethod
    def backtrack() -> "Action":
        return Action("backtrack")


@dataclass(frozen=True)
class Outcome:
    kind: str  # "ok" | "solved" | "conflict" | "failed"
    target: Optional[int] = None
    retry: Optional[tuple] = None
    solved: bool = False


@dataclass
class StepEvent:
    state_before: SearchState
    action: Action
    evidence: Any
    outcome: Outcome
    state_after: SearchState


@dataclass
class EpisodeResult:
    solved: bool
    decisions: int
    backtracks: int
    tokens_used: int
    termination: str  # solved | timeout | false-unsat | exhausted
    missed_conflicts: int = 0
    repeats: int = 0
    illegal: int = 0
    witness: Optional[dict] = None


BRANCH_TOKENS = 2
BACKTRACK_TOKENS = 1


def initial_state(adapter) -> SearchState:
    assignment: dict = {}
    forced, conflict, evidence = adapter.propagate(assignment, None)
    trail = []
    for var, value, reason in forced:
        assignment[var] = value
        trail.append(TrailEntry(var, value, 0, True, reason))
    return SearchState(assignment, adapter.domains(assignment), tuple(trail), 0, {}, conflict, evidence, {})


def _decide(base_trail, adapter, var, value, level, tried, conf_sets, keep_conflict=None) -> SearchState:
    trail = list(base_trail)
    trail.append(TrailEntry(var, value, level))
    assignment = {e.var: e.value for e in trail}
    if keep_conflict is not None:
        # a continue on a conflicted state cannot repair it; the conflict stays
        conflict, evidence = keep_conflict
    else:
        forced, conflict, evidence = adapter.propagate(assignment, var)
        for v, val, reason in forced:
            assignment[v] = val
            trail.append(TrailEntry(v, val, level, True, reason))
    return SearchState(assignment, adapter.domains(assignment), tuple(trail), level, tried, conflict,
                       evidence, conf_sets)


def _values_at(state: SearchState, adapter, level: int) -> tuple:
    dec = state.decision(level)
    below = {e.var: e.value for e in state.trail if e.level < level}
    return tuple(adapter.values_for(below, dec.var))


def _untried(state: SearchState, adapter, level: int) -> list:
    done = state.tried.get(level, frozenset())
    return [v for v in _values_at(state, adapter, level) if v not in done]


def _analyze(state: SearchState, adapter, chronological: bool):
    if state.conflict is not None and not chronological:
        involved = set(adapter.conflict_levels(state))
    else:
        involved = set(range(1, state.level + 1))
    conf = dict(state.conf_sets)
    while True:
        involved = {d for d in involved if 1 <= d <= state.level}
        if not involved:
            return EXHAUSTED, conf
        h = max(involved)
        conf[h] = frozenset(conf.get(h, frozenset()) | (involved - {h}))
        if _untried(state, adapter, h):
            return h, conf
        involved = set(conf[h])


def backjump_target(state: SearchState, adapter, chronological: bool = False) -> int:
    """Level whose decision is retried next, or EXHAUSTED.

    With conflict evidence the target is the deepest responsible level that
    still has an untried value; otherwise it is the deepest such level.
    """
    return _analyze(state, adapter, chronological)[0]


def step(state: SearchState, action: Action, adapter, *, proactive: bool = True,
         chronological: bool = False) -> StepEvent:
    """Apply one action and return the event with the resulting state.

    ``proactive`` permits a backtrack on a state with no exposed conflict
    (a verifier prune).  With ``proactive=False`` that is inadmissible.
    """
    if action.kind == "branch":
        if action.var not in adapter.selectable(state):
            raise InadmissibleAction(f"variable {action.var!r} is not selectable")
        if action.value not in state.domains.get(action.var, ()):
            raise InadmissibleAction(f"value {action.value!r} not in domain of {action.var!r}")
        level = state.level + 1
        tried = {k: v for k, v in state.tried.items() if k < level}
        tried[level] = frozenset([action.value])
        conf = {k: v for k, v in state.conf_sets.items() if k < level}
        keep = (state.conflict, state.evidence) if state.conflict is not None else None
        after = _decide(state.trail, adapter, action.var, action.value, level, tried, conf, keep)
        outcome = Outcome("solved", solved=True) if adapter.is_goal(after) else Outcome("ok")
        return StepEvent(state, action, after.evidence, outcome, after)

    if action.kind != "backtrack":
        raise InadmissibleAction(f"unknown action kind {action.kind!r}")
    if state.conflict is None and not proactive and adapter.selectable(state):
        raise InadmissibleAction("backtrack without an exposed conflict")
    target, conf = _analyze(state, adapter, chronological)
    if target == EXHAUSTED:
        return StepEvent(state, action, None, Outcome("failed"), state)
    dec = state.decision(target)
    value = _untried(state, adapter, target)[0]
    base = tuple(e for e in state.trail if e.level < target)
    tried = {k: v for k, v in state.tried.items() if k < target}
    tried[target] = frozenset(state.tried.get(target, frozenset()) | {value})
    conf = {k: v for k, v in conf.items() if k <= target}
    after = _decide(base, adapter, dec.var, value, target, tried, conf)
    solved = adapter.is_goal(after)
    return StepEvent(state, action, after.evidence, Outcome("conflict", target, (dec.var, value), solved), after)


class ReactiveOracle:
    """Backtrack exactly when propagation has exposed a conflict."""

    consults_conflicts = True

    def __call__(self, state, adapter) -> bool:
        return state.conflict is not None


def run_search(adapter, policy: Callable, verifier: Callable, budget: Optional[int] = None,
               rng: Optional[np.random.Generator] = None, *, chronological: bool = False,
               satisfiable: Optional[bool] = None, on_query: Optional[Callable] = None,
               record: bool = True, max_steps: Optional[int] = None):
    """Drive the engine with a symbolic policy and verifier.

    Verifiers with ``consults_conflicts = False`` are only asked about
    conflict-free states; exposed conflicts backtrack automatically.
    Token accounting charges 2 tokens per branch and 1 per backtrack,
    matching what a model would emit.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    state = initial_state(adapter)
    events: list[StepEvent] = []
    tokens = decisions = backtracks = steps = 0
    consults = getattr(verifier, "consults_conflicts", True)

    def finish(solved, term, st):
        witness = dict(st.assignment) if solved else None
        return EpisodeResult(solved, decisions, backtracks, tokens, term, witness=witness), events

    if adapter.is_goal(state):
        return finish(True, "solved", state)
    while True:
        if max_steps is not None and steps >= max_steps:
            return finish(False, "timeout", state)
        steps += 1
        auto = state.conflict is not None and not consults
        bt = True if auto else bool(verifier(state, adapter))
        if on_query is not None:
            on_query(state, bt, auto)
        if not bt and not adapter.selectable(state):
            bt = True
        action = Action.backtrack() if bt else policy(state, adapter, rng)
        cost = BACKTRACK_TOKENS if bt else BRANCH_TOKENS
        if budget is not None and tokens + cost > budget:
            return finish(False, "timeout", state)
        ev = step(state, action, adapter, proactive=True, chronological=chronological)
        tokens += cost
        if record:
            events.append(ev)
        if bt:
            backtracks += 1
            if state.conflict is not None and hasattr(policy, "on_conflict"):
                policy.on_conflict(state, adapter)
            if ev.outcome.kind == "failed":
                if satisfiable is None:
                    satisfiable = adapter.is_satisfiable()
                return finish(False, "false-unsat" if satisfiable else "exhausted", state)
            decisions += 1  # the retried value
        else:
            decisions += 1
        state = ev.state_after
        if adapter.is_goal(state):
            return finish(True, "solved", state)


def replay(adapter, actions, *, chronological: bool = False) -> list[StepEvent]:
    state = initial_state(adapter)
    out = []
    for a in actions:
        ev = step(state, a, adapter, proactive=True, chronological=chronological)
        out.append(ev)
        state = ev.state_after
    return out
