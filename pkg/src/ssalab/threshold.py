"""Symbolic false-prune threshold lab.

A corrupted oracle flips exact viability verdicts.  Flips are driven by a
per-state hash uniform, so the same state draws the same uniform at every
grid point and curves are coupled across rates.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, stats

from .domains import SatAdapter, state_viable
from .errors import FitDiverged, InvalidParams
from .search.core import initial_state, run_search, step, Action
from .search.policies import exhaustive_policy

STRUCTURES = ("iid", "depth", "confidence", "clustered")


@dataclass
class CorruptionConfig:
    p_fp: float = 0.0
    p_fn: float = 0.0
    structure: str = "iid"
    seed: int = 0
    slope: float = 1.0  # depth: logistic steepness
    midpoint: float = 5.0  # depth: logistic centre (decision depth)
    run_length: float = 3.0  # clustered: mean flip-run length

    def __post_init__(self):
        for p in (self.p_fp, self.p_fn):
            if not 0.0 <= p <= 1.0:
                raise InvalidParams("corruption probabilities must lie in [0, 1]")
        if self.structure not in STRUCTURES:
            raise InvalidParams(f"unknown corruption structure {self.structure!r}")
        if self.run_length < 1:
            raise InvalidParams("clustered run length must be >= 1")


def hash_uniform(key, seed: int, salt: str = "") -> float:
    h = hashlib.blake2b(f"{salt}|{seed}|{key}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") / 2.0 ** 64


def _state_key(state) -> str:
    return repr(sorted(state.assignment.items()))


class ViabilityOracle:
    """Exact viability with a per-instance cache."""

    def __init__(self, adapter):
        self.adapter = adapter
        self.cache: dict = {}
        inst = getattr(adapter, "cnf", None) or getattr(adapter, "graph", None) or adapter
        # salts the corruption hash so equal partial assignments in different instances draw independently
        self.fingerprint = hashlib.blake2b(repr(inst).encode(), digest_size=8).hexdigest()

    def __call__(self, state) -> bool:
        if state.conflict is not None:
            return False
        key = frozenset(state.assignment.items())
        if key not in self.cache:
            self.cache[key] = state_viable(self.adapter, state)
        return self.cache[key]


@dataclass
class QueryStats:
    viable: int = 0
    dead: int = 0
    false_prunes: int = 0
    true_prunes: int = 0
    missed: int = 0


class CorruptedVerifier:
    """Returns True (backtrack) for states judged dead.

    Only asked about conflict-free states; exposed conflicts are handled by
    the infrastructure.
    """

    consults_conflicts = False

    def __init__(self, oracle: ViabilityOracle, cfg: CorruptionConfig):
        self.oracle = oracle
        self.cfg = cfg
        self.stats = QueryStats()
        self._rng = np.random.default_rng(cfg.seed)
        self._run = 0

    def rate(self, state, adapter, p: float) -> float:
        c = self.cfg
        if c.structure == "depth":
            return min(1.0, p * 2.0 / (1.0 + math.exp(-c.slope * (state.level - c.midpoint))))
        if c.structure == "confidence":
            frac = len(state.assignment) / max(len(list(adapter.variables)), 1)
            return min(1.0, p * 2.0 * (1.0 - frac))
        return p

    def _flip(self, state, adapter, p: float, salt: str) -> bool:
        if self.cfg.structure == "clustered":
            if self._run > 0:
                self._run -= 1
                return True
            # runs start at rate p / L so the long-run flip fraction stays near p
            if p > 0 and self._rng.random() < min(1.0, p / self.cfg.run_length):
                self._run = int(self._rng.geometric(1.0 / self.cfg.run_length)) - 1
                return True
            return False
        key = self.oracle.fingerprint + _state_key(state)
        return hash_uniform(key, self.cfg.seed, salt) < self.rate(state, adapter, p)

    def __call__(self, state, adapter) -> bool:
        viable = self.oracle(state)
        if viable:
            self.stats.viable += 1
            flip = self._flip(state, adapter, self.cfg.p_fp, "fp")
            self.stats.false_prunes += flip
            return flip
        self.stats.dead += 1
        flip = self._flip(state, adapter, self.cfg.p_fn, "fn")
        self.stats.missed += flip
        self.stats.true_prunes += not flip
        return not flip


def corrupt_oracle(oracle: ViabilityOracle, cfg: CorruptionConfig) -> CorruptedVerifier:
    return CorruptedVerifier(oracle, cfg)


def survival_lower_bound(alpha: float, m: float) -> float:
    if not 0 <= alpha <= 1 or m < 0:
        raise InvalidParams("need alpha in [0, 1] and M >= 0")
    return (1.0 - alpha) ** m


def multi_path_model(alpha, m_eff: float, r_eff: float):
    return 1.0 - (1.0 - (1.0 - np.asarray(alpha, dtype=float)) ** m_eff) ** r_eff


def fit_multipath(alphas, survival) -> tuple[float, float]:
    """Least squares over a coarse grid, refined locally."""
    a = np.asarray(alphas, dtype=float)
    s = np.asarray(survival, dtype=float)
    best = None
    for m in np.arange(1, 101, 1.0):
        for r in np.concatenate([np.arange(1, 10, 0.5), np.arange(10, 51, 2.0)]):
            err = float(np.sum((multi_path_model(a, m, r) - s) ** 2))
            if best is None or err < best[0]:
                best = (err, m, r)
    res = optimize.least_squares(lambda x: multi_path_model(a, x[0], x[1]) - s, x0=[best[1], best[2]],
                                 bounds=([1e-6, 1.0], [1e4, 1e4]))
    if not res.success or not np.all(np.isfinite(res.x)):
        raise FitDiverged(f"multi-path fit failed; residuals {res.fun}")
    return float(res.x[0]), float(res.x[1])


def critical_threshold(q: float, m: float) -> tuple[float, float]:
    """(exact 1 - q^(1/m), asymptote log(1/q)/m)."""
    if not 0 < q <= 1 or m < 1:
        raise InvalidParams("need q in (0, 1] and m >= 1")
    return 1.0 - q ** (1.0 / m), math.log(1.0 / q) / m


def homogeneous_monte_carlo(alphas, m: int = 20, trials: int = 10_000, seed: int = 0) -> list:
    """Per alpha: (empirical survival, analytic (1-a)^m, Clopper-Pearson 95% interval)."""
    rng = np.random.default_rng(seed)
    rows = []
    for a in alphas:
        alive = int((rng.random((trials, m)) >= a).all(axis=1).sum())
        ci = stats.binomtest(alive, trials).proportion_ci(0.95, method="exact")
        rows.append((alive / trials, (1 - a) ** m, (ci.low, ci.high)))
    return rows


def crossing(alphas, survival, q: float = 0.5) -> float:
    """Linear interpolation of the first grid interval where survival crosses q."""
    a = list(alphas)
    s = list(survival)
    for i in range(1, len(a)):
        if s[i - 1] >= q > s[i] or s[i - 1] > q >= s[i]:
            return a[i - 1] + (s[i - 1] - q) * (a[i] - a[i - 1]) / (s[i - 1] - s[i])
    raise InvalidParams("survival curve never crosses q on this grid")


# bounded dead-end probe

def _dpll_conflicts(adapter, state, budget: int, used: list) -> Optional[bool]:
    """True if refuted, False if a model exists, None once conflicts exceed the budget."""
    if state.conflict is not None:
        used[0] += 1
        return True if used[0] <= budget else None
    if adapter.is_goal(state):
        return False
    sel = adapter.selectable(state)
    if not sel:
        return False
    var = sel[0]
    for val in state.domains[var]:
        child = step(state, Action.branch(var, val), adapter).state_after
        r = _dpll_conflicts(adapter, child, budget, used)
        if r is not True:
            return r
    return True


def bounded_probe(adapter, state, conflict_budget: int) -> str:
    """DEAD if plain DPLL refutes the state within the conflict budget.

    An already exposed conflict counts as proof with zero search.  The
    probe never answers DEAD on a viable state.
    """
    if conflict_budget < 0:
        raise InvalidParams("conflict budget must be >= 0")
    if state.conflict is not None:
        return "DEAD"
    return "DEAD" if _dpll_conflicts(adapter, state, conflict_budget, [0]) is True else "UNKNOWN"


def probe_refutes(adapter, state, conflict_budget: int) -> bool:
    return bounded_probe(adapter, state, conflict_budget) == "DEAD"


# sweeps

def branch_points(adapter, policy=exhaustive_policy) -> int:
    """Verifier queries on viable nodes along the solution path of a clean run."""
    oracle = ViabilityOracle(adapter)
    ver = CorruptedVerifier(oracle, CorruptionConfig())
    run_search(adapter, policy, ver, None, record=False, satisfiable=True)
    return ver.stats.viable


@dataclass
class SweepRow:
    kind: str
    rate: float
    solve_rate: float
    alpha_v: float
    precision: float
    recall: float
    mean_backtracks: float
    extra_backtracks: float
    runs: int

    def as_row(self) -> dict:
        return dict(self.__dict__)


def run_corruption_sweep(instances, grid, kind: str = "fp", seeds=(0,), policy=exhaustive_policy,
                         structure: str = "iid") -> tuple[list, float]:
    """Solve rate versus corruption rate.  Returns (rows, mean branch points M)."""
    if kind not in ("fp", "fn"):
        raise InvalidParams("kind must be fp or fn")
    adapters = [SatAdapter(c) if not hasattr(c, "selectable") else c for c in instances]
    oracles = [ViabilityOracle(a) for a in adapters]
    base_bt = []
    ms = []
    for a, o in zip(adapters, oracles):
        ver = CorruptedVerifier(o, CorruptionConfig())
        res, _ = run_search(a, policy, ver, None, record=False, satisfiable=True)
        base_bt.append(res.backtracks)
        ms.append(ver.stats.viable)
    rows = []
    for rate in grid:
        solved = runs = 0
        st = QueryStats()
        bts, extra = [], []
        for seed in seeds:
            cfg = CorruptionConfig(p_fp=rate if kind == "fp" else 0.0, p_fn=rate if kind == "fn" else 0.0,
                                   structure=structure, seed=seed)
            for a, o, b0 in zip(adapters, oracles, base_bt):
                ver = CorruptedVerifier(o, cfg)
                res, _ = run_search(a, policy, ver, None, record=False, satisfiable=True)
                solved += res.solved
                runs += 1
                bts.append(res.backtracks)
                extra.append(res.backtracks - b0)
                for f in ("viable", "dead", "false_prunes", "true_prunes", "missed"):
                    setattr(st, f, getattr(st, f) + getattr(ver.stats, f))
        said_dead = st.true_prunes + st.false_prunes
        rows.append(SweepRow(kind, float(rate), solved / runs, st.false_prunes / max(st.viable, 1),
                             st.true_prunes / said_dead if said_dead else 1.0,
                             st.true_prunes / st.dead if st.dead else 1.0,
                             float(np.mean(bts)), float(np.mean(extra)), runs))
    return rows, float(np.mean(ms))


# false-negative overhead instrumentation

def dead_subtree_size(adapter, state, policy=exhaustive_policy, cap: int = 1_000_000) -> int:
    """Nodes of the search subtree rooted at a dead state when every child
    is expanded until a conflict surfaces."""
    count = 1
    if state.conflict is not None or adapter.is_goal(state):
        return count
    sel = adapter.selectable(state)
    if not sel:
        return count
    var = policy(state, adapter, None).var
    for val in state.domains[var]:
        child = step(state, Action.branch(var, val), adapter).state_after
        count += dead_subtree_size(adapter, child, policy, cap - count)
        if count > cap:
            raise InvalidParams("dead subtree exceeds the enumeration cap")
    return count


@dataclass
class OverheadReport:
    extra_backtracks: int
    bound: int
    fn_roots: int
    solved: bool


def fn_overhead(adapter, p_fn: float, seed: int = 0, policy=exhaustive_policy) -> OverheadReport:
    """Extra backtracks of an FN-only verifier against the exact oracle, and
    the bound: sum over minimal missed dead nodes u of (|subtree(u)| - 1)."""
    oracle = ViabilityOracle(adapter)
    clean = CorruptedVerifier(oracle, CorruptionConfig())
    base, _ = run_search(adapter, policy, clean, None, record=False, satisfiable=True, chronological=True)
    noisy = CorruptedVerifier(oracle, CorruptionConfig(p_fn=p_fn, seed=seed))
    roots = []
    inside = []  # stack depth markers for dead subtrees currently entered

    def on_query(state, bt, auto):
        if auto or bt:
            return
        if not oracle(state):
            # minimal: the parent decision state was viable
            parent_assign = {e.var: e.value for e in state.trail if e.level < state.level}
            if state.level == 0 or _viable_assignment(adapter, oracle, parent_assign):
                roots.append(state)

    res, _ = run_search(adapter, policy, noisy, None, record=False, satisfiable=True, chronological=True,
                        on_query=on_query)
    uniq = {}
    for s in roots:
        uniq[frozenset(s.assignment.items())] = s
    bound = sum(dead_subtree_size(adapter, s, policy) - 1 for s in uniq.values())
    return OverheadReport(res.backtracks - base.backtracks, bound, len(uniq), res.solved)


def _viable_assignment(adapter, oracle: ViabilityOracle, assignment: dict) -> bool:
    key = frozenset(assignment.items())
    if key not in oracle.cache:
        from .domains.sat import sat_oracle
        oracle.cache[key] = sat_oracle(adapter.cnf, assignment) is not None
    return oracle.cache[key]
