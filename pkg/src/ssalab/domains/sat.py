"""3-SAT domain: CNF container, propagation adapter, exact oracle, generators.

Literals are signed 1-based integers (DIMACS convention); variable ``i``
(0-based) appears as ``i + 1`` or ``-(i + 1)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InvalidParams, ResourceLimit


@dataclass(frozen=True)
class Cnf:
    num_vars: int
    clauses: tuple

    def __post_init__(self):
        for c in self.clauses:
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise InvalidParams(f"literal {lit} out of range for {self.num_vars} variables")

    @staticmethod
    def from_lists(num_vars: int, clauses) -> "Cnf":
        return Cnf(num_vars, tuple(tuple(int(x) for x in c) for c in clauses))


def lit_var(lit: int) -> int:
    return abs(lit) - 1


def lit_value(lit: int, assignment: dict) -> Optional[bool]:
    """Truth value of a literal under a partial assignment (None if open)."""
    v = assignment.get(abs(lit) - 1)
    if v is None:
        return None
    return v if lit > 0 else not v


@dataclass(frozen=True)
class SatEvidence:
    clause: Optional[int]
    verdict: str  # SAT_OK | UNIT | CONFLICT


class SatAdapter:
    """Unit propagation over a CNF, for use by the search engine."""

    domain_name = "sat"

    def __init__(self, cnf: Cnf, chained: bool = True):
        # chained=False runs a single propagation round from the decision,
        # which reproduces the worked three-variable example trace
        self.cnf = cnf
        self.chained = chained
        self.num_vars = cnf.num_vars
        self.occ: dict[int, list[int]] = {}
        self.var_occ: list[list[int]] = [[] for _ in range(cnf.num_vars)]
        for j, c in enumerate(cnf.clauses):
            for lit in c:
                self.occ.setdefault(lit, []).append(j)
                if j not in self.var_occ[abs(lit) - 1]:
                    self.var_occ[abs(lit) - 1].append(j)
        self._sat: Optional[bool] = None

    @property
    def variables(self):
        return range(self.num_vars)

    def values_for(self, assignment: dict, var: int) -> tuple:
        return (True, False)

    def domains(self, assignment: dict) -> dict:
        return {v: (True, False) for v in range(self.num_vars) if v not in assignment}

    def selectable(self, state) -> list:
        return [v for v in range(self.num_vars) if v not in state.assignment]

    def _check(self, j: int, assignment: dict):
        """Return ("sat"|"unit"|"conflict"|"open", unit literal or None)."""
        open_lits = []
        for lit in self.cnf.clauses[j]:
            val = lit_value(lit, assignment)
            if val is True:
                return "sat", None
            if val is None:
                open_lits.append(lit)
        if not open_lits:
            return "conflict", None
        if len(open_lits) == 1:
            return "unit", open_lits[0]
        return "open", None

    def propagate(self, assignment: dict, trigger):
        """Unit propagation (to fixpoint when chained).  Does not mutate ``assignment``.

        Returns (forced [(var, value, reason clause)], conflict clause or
        None, evidence).
        """
        local = dict(assignment)
        forced = []
        conflict = None
        check_all = trigger is None
        pending = [] if check_all else [trigger]
        while conflict is None:
            if check_all:
                # initial pass: scan every clause until nothing changes
                changed = False
                for j in range(len(self.cnf.clauses)):
                    status, unit = self._check(j, local)
                    if status == "conflict":
                        conflict = j
                        break
                    if status == "unit":
                        local[lit_var(unit)] = unit > 0
                        forced.append((lit_var(unit), unit > 0, j))
                        changed = True
                if not changed:
                    break
                continue
            if not pending:
                break
            var = pending.pop(0)
            if not self.chained:
                return self._single_round(local, var, forced)
            falsified = -(var + 1) if local[var] else (var + 1)
            for j in self.occ.get(falsified, ()):
                status, unit = self._check(j, local)
                if status == "conflict":
                    conflict = j
                    break
                if status == "unit":
                    local[lit_var(unit)] = unit > 0
                    forced.append((lit_var(unit), unit > 0, j))
                    pending.append(lit_var(unit))
        conflict, ev = self._evidence(forced, conflict, local)
        return forced, conflict, ev

    def _single_round(self, local, var, forced):
        falsified = -(var + 1) if local[var] else (var + 1)
        units = []
        conflict = None
        for j in self.occ.get(falsified, ()):
            status, unit = self._check(j, local)
            if status == "conflict":
                conflict = j
                break
            if status == "unit":
                units.append((j, unit))
        if conflict is None:
            for j, unit in units:
                v, val = lit_var(unit), unit > 0
                if v in local:
                    if local[v] != val:
                        conflict = j
                        break
                    continue
                local[v] = val
                forced.append((v, val, j))
        conflict, ev = self._evidence(forced, conflict, local)
        return forced, conflict, ev

    def inspect(self, assignment: dict, conflict) -> Optional[SatEvidence]:
        """Canonical evidence for a state: a function of the assignment only.

        A falsified clause if any (first by index), else the unsatisfied
        clause with the fewest open literals, else the first clause.
        """
        if not self.cnf.clauses:
            return None
        best, best_open = None, None
        for j, c in enumerate(self.cnf.clauses):
            vals = [lit_value(l, assignment) for l in c]
            if any(v is True for v in vals):
                continue
            n_open = sum(v is None for v in vals)
            if n_open == 0:
                return SatEvidence(j, "CONFLICT")
            if best is None or n_open < best_open:
                best, best_open = j, n_open
        if best is None:
            return SatEvidence(0, "SAT_OK")
        return SatEvidence(best, "UNIT" if best_open == 1 else "SAT_OK")

    def _evidence(self, forced, conflict, local):
        ev = self.inspect(local, conflict)
        if conflict is None:
            return None, ev
        if ev is not None and ev.verdict == "CONFLICT":
            return ev.clause, ev
        return conflict, SatEvidence(conflict, "CONFLICT")

    def conflict_levels(self, state) -> set:
        levels: set = set()
        entries = {e.var: e for e in state.trail}
        seen = set()
        stack = [lit_var(l) for l in self.cnf.clauses[state.conflict]]
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            e = entries.get(v)
            if e is None or e.level == 0:
                continue
            if e.forced:
                stack.extend(lit_var(l) for l in self.cnf.clauses[e.reason] if lit_var(l) != v)
            else:
                levels.add(e.level)
        return levels

    def is_goal(self, state) -> bool:
        if state.conflict is not None or len(state.assignment) < self.num_vars:
            return False
        return all(any(lit_value(l, state.assignment) for l in c) for c in self.cnf.clauses)

    def is_satisfiable(self) -> bool:
        if self._sat is None:
            self._sat = sat_oracle(self.cnf) is not None
        return self._sat

    def state_key(self, state):
        return frozenset(state.assignment.items())


def evaluate(cnf: Cnf, assignment: dict) -> bool:
    return all(any(lit_value(l, assignment) for l in c) for c in cnf.clauses)


def brute_force_unit_fixpoint(cnf: Cnf, assignment: dict):
    """Reference propagation: rescan all clauses until no unit clause remains.

    Returns (assignment after propagation, conflict flag).
    """
    local = dict(assignment)
    while True:
        changed = False
        for c in cnf.clauses:
            vals = [lit_value(l, local) for l in c]
            if any(v is True for v in vals):
                continue
            open_lits = [l for l, v in zip(c, vals) if v is None]
            if not open_lits:
                return local, True
            if len(open_lits) == 1:
                local[lit_var(open_lits[0])] = open_lits[0] > 0
                changed = True
        if not changed:
            return local, False


def brute_force_models(cnf: Cnf, assignment: Optional[dict] = None):
    """Yield every complete model extending ``assignment`` (exhaustive)."""
    assignment = assignment or {}
    free = [v for v in range(cnf.num_vars) if v not in assignment]
    for bits in itertools.product((False, True), repeat=len(free)):
        full = dict(assignment)
        full.update(zip(free, bits))
        if evaluate(cnf, full):
            yield full


def sat_oracle(cnf: Cnf, assignment: Optional[dict] = None, node_cap: int = 2_000_000) -> Optional[dict]:
    """Exact DPLL satisfiability check with its own unit propagation.

    Returns a satisfying complete assignment extending ``assignment`` or
    None.  Raises ResourceLimit when more than ``node_cap`` nodes are used.
    """
    clauses = [list(c) for c in cnf.clauses]
    nodes = [0]

    def simplify(cls, lit):
        out = []
        for c in cls:
            if lit in c:
                continue
            if -lit in c:
                c = [x for x in c if x != -lit]
                if not c:
                    return None
            out.append(c)
        return out

    def solve(cls, assign):
        nodes[0] += 1
        if nodes[0] > node_cap:
            raise ResourceLimit("oracle node cap exceeded")
        while True:
            unit = next((c[0] for c in cls if len(c) == 1), None)
            if unit is None:
                break
            assign[lit_var(unit)] = unit > 0
            cls = simplify(cls, unit)
            if cls is None:
                return None
        if not cls:
            return assign
        counts: dict = {}
        for c in cls:
            for l in c:
                counts[abs(l)] = counts.get(abs(l), 0) + 1
        var = max(counts, key=lambda k: (counts[k], -k))
        for lit in (var, -var):
            nxt = simplify(cls, lit)
            if nxt is None:
                continue
            a = dict(assign)
            a[var - 1] = lit > 0
            res = solve(nxt, a)
            if res is not None:
                return res
        return None

    start = dict(assignment or {})
    cls = clauses
    for var, val in start.items():
        cls = simplify(cls, (var + 1) if val else -(var + 1))
        if cls is None:
            return None
    res = solve(cls, dict(start))
    if res is None:
        return None
    for v in range(cnf.num_vars):
        res.setdefault(v, False)
    return res


def _random_clause(rng, n, k):
    vs = rng.choice(n, size=k, replace=False)
    signs = rng.integers(0, 2, size=k)
    return tuple(sorted(((int(v) + 1) * (1 if s else -1) for v, s in zip(vs, signs)), key=abs))


def random_3sat(n: int, ratio: float = 4.26, rng=None, satisfiable: Optional[bool] = None,
                max_attempts: int = 50) -> Cnf:
    """Uniform random 3-SAT with ``round(ratio * n)`` clauses.

    With ``satisfiable`` set, rejection-sample until the oracle agrees,
    at most ``max_attempts`` times.
    """
    if n < 3 or ratio <= 0:
        raise InvalidParams("random 3-SAT needs n >= 3 and a positive clause ratio")
    rng = rng if rng is not None else np.random.default_rng()
    m = int(round(ratio * n))
    for _ in range(max_attempts):
        cnf = Cnf(n, tuple(_random_clause(rng, n, 3) for _ in range(m)))
        if satisfiable is None or (sat_oracle(cnf) is not None) == satisfiable:
            return cnf
    raise ResourceLimit(f"no instance with satisfiable={satisfiable} in {max_attempts} attempts")


def planted_3sat(n: int, ratio: float = 4.0, rng=None):
    """Random 3-SAT consistent with a hidden assignment; no duplicate clauses.

    Returns (cnf, planted assignment).
    """
    if n < 3 or ratio <= 0:
        raise InvalidParams("planted 3-SAT needs n >= 3 and a positive clause ratio")
    rng = rng if rng is not None else np.random.default_rng()
    m = int(round(ratio * n))
    if m > 7 * (n * (n - 1) * (n - 2) // 6):
        raise InvalidParams("too many clauses for distinct planted clauses")
    hidden = {v: bool(b) for v, b in enumerate(rng.integers(0, 2, size=n))}
    seen = set()
    clauses = []
    while len(clauses) < m:
        c = _random_clause(rng, n, 3)
        if c in seen or not any(lit_value(l, hidden) for l in c):
            continue
        seen.add(c)
        clauses.append(c)
    return Cnf(n, tuple(clauses)), hidden


def example1_cnf() -> Cnf:
    """Four-clause worked example with three variables (solved after one backtrack)."""
    return Cnf.from_lists(3, [[1, 2, 3], [-1, -2], [-1, 2, -3], [1, -2, -3]])
