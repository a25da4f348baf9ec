"""Backtracking parser for an ambiguous expression grammar.

Each choice point (a nonterminal with several alternatives) is a search
variable; its value is the alternative index.  Everything between choice
points is deterministic: terminals are matched against the input and
single-alternative rules are expanded.  A terminal mismatch, running out
of input, or leftover input after the stack empties is a conflict.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InvalidParams

TERMINALS = ("NUM", "+", "*", "(", ")")

# Expr <- Term ('+' Expr / eps); Term <- Factor ('*' Term / eps);
# Factor <- '(' Expr ')' / NUM / NUM NUM
GRAMMAR = {
    "E": (("T", "E'"),),
    "E'": (("+", "E"), ()),
    "T": (("F", "T'"),),
    "T'": (("*", "T"), ()),
    "F": (("(", "E", ")"), ("NUM",), ("NUM", "NUM")),
}
START = "E"
NONTERMINALS = tuple(GRAMMAR)


@dataclass(frozen=True)
class PegTask:
    tokens: tuple
    grammar: dict = None

    def __post_init__(self):
        if self.grammar is None:
            object.__setattr__(self, "grammar", GRAMMAR)
        for t in self.tokens:
            if t not in TERMINALS:
                raise InvalidParams(f"token {t!r} is not a terminal")
        for alts in self.grammar.values():
            for alt in alts:
                for sym in alt:
                    if sym not in self.grammar and sym not in TERMINALS:
                        raise InvalidParams(f"undefined symbol {sym!r}")


@dataclass(frozen=True)
class ParserConfig:
    stack: tuple  # top of stack is the last element
    cursor: int
    status: str  # "choice" | "done" | "conflict"


@dataclass(frozen=True)
class PegEvidence:
    cursor: int
    status: str


class PegAdapter:
    domain_name = "peg"

    def __init__(self, task: PegTask):
        self.task = task
        self.tokens = task.tokens
        self.grammar = task.grammar
        self._cache: dict = {}
        self._sat: Optional[bool] = None

    def config(self, assignment: dict) -> ParserConfig:
        """Replay the choices 0, 1, ... present in ``assignment``."""
        key = tuple(assignment.get(d) for d in range(len(assignment) + 1))
        if key in self._cache:
            return self._cache[key]
        stack = [START]
        cursor = 0
        d = 0
        toks = self.tokens
        while True:
            if not stack:
                status = "done" if cursor == len(toks) else "conflict"
                break
            top = stack[-1]
            if top in TERMINALS:
                if cursor < len(toks) and toks[cursor] == top:
                    stack.pop()
                    cursor += 1
                    continue
                status = "conflict"
                break
            alts = self.grammar[top]
            if len(alts) == 1:
                stack.pop()
                stack.extend(reversed(alts[0]))
                continue
            if d not in assignment:
                status = "choice"
                break
            stack.pop()
            stack.extend(reversed(alts[assignment[d]]))
            d += 1
        cfg = ParserConfig(tuple(stack), cursor, status)
        self._cache[key] = cfg
        return cfg

    @property
    def variables(self):
        return range(3 * len(self.tokens) + 4)

    def values_for(self, assignment: dict, var: int) -> tuple:
        below = {d: v for d, v in assignment.items() if d < var}
        cfg = self.config(below)
        if cfg.status != "choice":
            return ()
        return tuple(range(len(self.grammar[cfg.stack[-1]])))

    def domains(self, assignment: dict) -> dict:
        cfg = self.config(assignment)
        if cfg.status != "choice":
            return {}
        return {len(assignment): tuple(range(len(self.grammar[cfg.stack[-1]])))}

    def selectable(self, state) -> list:
        return list(state.domains)

    def propagate(self, assignment: dict, trigger):
        cfg = self.config(assignment)
        conflict = cfg.cursor if cfg.status == "conflict" else None
        return [], conflict, PegEvidence(cfg.cursor, cfg.status)

    def conflict_levels(self, state) -> set:
        # parser configurations depend on every earlier choice
        return set(range(1, state.level + 1))

    def is_goal(self, state) -> bool:
        return state.conflict is None and self.config(state.assignment).status == "done"

    def is_satisfiable(self) -> bool:
        if self._sat is None:
            self._sat = reference_parse(self.task)
        return self._sat

    def state_key(self, state):
        cfg = self.config(state.assignment)
        return (cfg.stack, cfg.cursor, cfg.status)


def reference_parse(task: PegTask) -> bool:
    """Recursive descent with full backtracking over every alternative."""
    toks, grammar = task.tokens, task.grammar

    def parse(sym, pos):
        if sym in TERMINALS:
            if pos < len(toks) and toks[pos] == sym:
                yield pos + 1
            return
        for alt in grammar[sym]:
            yield from seq(alt, pos)

    def seq(symbols, pos):
        if not symbols:
            yield pos
            return
        for mid in parse(symbols[0], pos):
            yield from seq(symbols[1:], mid)

    return any(end == len(toks) for end in parse(START, 0))


def random_expression(length: int, rng=None, valid: bool = True) -> PegTask:
    """Random token string of roughly ``length`` tokens.

    Valid strings come from random derivations of the grammar; invalid
    ones are uniform token strings (usually rejected by the parser).
    """
    if length < 1:
        raise InvalidParams("length must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    if not valid:
        return PegTask(tuple(TERMINALS[i] for i in rng.integers(0, len(TERMINALS), size=length)))

    def expr(budget):
        out = term(budget)
        if len(out) + 2 <= budget and rng.random() < 0.5:
            out += ["+"] + expr(budget - len(out) - 1)
        return out

    def term(budget):
        out = factor(budget)
        if len(out) + 2 <= budget and rng.random() < 0.4:
            out += ["*"] + term(budget - len(out) - 1)
        return out

    def factor(budget):
        r = rng.random()
        if budget >= 3 and r < 0.25:
            return ["("] + expr(budget - 2) + [")"]
        if budget >= 2 and r < 0.55:
            return ["NUM", "NUM"]
        return ["NUM"]

    return PegTask(tuple(expr(length)))
