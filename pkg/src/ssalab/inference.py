"""Couple a trained model to the search engine.

The model only emits action tokens.  At the action position of each block
it either predicts ``CONFLICT`` (backtrack) or a variable token followed by
a value token.  Propagation, conflict exposure, backjumps and the state
block itself are written by the infrastructure.

Two protocols:

* cumulative: the context is the prefix plus every emitted block so far.
* state-rebuilt: the context is the prefix plus the current state part.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import torch

from .codec.encode import encode_block, make_codec
from .codec.layout import Layout
from .domains import make_adapter
from .errors import InsufficientData, InvalidParams, PositionOverflow
from .search.core import (BACKTRACK_TOKENS, BRANCH_TOKENS, Action, EpisodeResult, initial_state, step)
from .search.policies import occurrence_domain_policy

PROTOCOLS = ("cumulative", "state-rebuilt")
POLICY_SOURCES = ("model", "random-variable", "oracle")
VERIFIER_SOURCES = ("model", "oracle", "corrupted", "bounded-probe")


@dataclass
class ProtocolConfig:
    protocol: str = "state-rebuilt"
    budget: Optional[int] = 2048
    policy: str = "model"
    verifier: str = "model"
    threshold: float = 0.5
    fmt: str = "enriched"
    corrupted: Optional[Callable] = None  # verifier(state, adapter) for verifier="corrupted"
    probe_budget: int = 8  # conflict budget for verifier="bounded-probe"

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise InvalidParams(f"unknown protocol {self.protocol!r}")
        if self.budget is not None and self.budget <= 0:
            raise InvalidParams("budget must be positive")
        if self.policy not in POLICY_SOURCES:
            raise InvalidParams(f"unknown policy source {self.policy!r}")
        if self.verifier not in VERIFIER_SOURCES:
            raise InvalidParams(f"unknown verifier source {self.verifier!r}")
        if self.verifier == "corrupted" and self.corrupted is None:
            raise InvalidParams("corrupted verifier needs a callable")


@dataclass
class SolveMetrics:
    solve_rate: float
    timeout_rate: float
    false_unsat_rate: float
    exhausted_rate: float
    mean_decisions: float
    mean_backtracks: float
    repeat_rate: float
    episodes: int = 0

    def as_row(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EpisodeLog:
    context_lengths: list = field(default_factory=list)
    p_backtrack: list = field(default_factory=list)


class ModelAgent:
    """Reads next-token distributions off a model for one episode."""

    def __init__(self, model, vocab):
        self.model = model
        self.vocab = vocab
        self.conflict_id = vocab.id("CONFLICT")

    def dist(self, tokens: list, layout: Layout) -> np.ndarray:
        ids = torch.as_tensor(self.vocab.encode(tokens), dtype=torch.long)
        logits = self.model.forward_exact(ids, layout)[-1].double()
        return torch.softmax(logits, dim=-1).numpy()


def _pick(dist, allowed_ids):
    """Argmax over all tokens; falls back to the admissible argmax.

    Returns (token id, whether the unrestricted argmax was admissible).
    """
    top = int(np.argmax(dist))
    if top in allowed_ids:
        return top, True
    ids = sorted(allowed_ids)
    return ids[int(np.argmax(dist[ids]))], False


def _probe_verdict(state, adapter, budget: int) -> bool:
    """Backtrack if a conflict is exposed or a capped DPLL refutes the state."""
    if state.conflict is not None:
        return True
    from .threshold import probe_refutes
    return probe_refutes(adapter, state, budget)


def run_episode(model, vocab, instance, cfg: ProtocolConfig, rng: Optional[np.random.Generator] = None,
                adapter=None, log: Optional[EpisodeLog] = None) -> EpisodeResult:
    rng = rng if rng is not None else np.random.default_rng(0)
    adapter = adapter if adapter is not None else make_adapter(instance)
    codec = make_codec(adapter, cfg.fmt)
    agent = ModelAgent(model, vocab) if model is not None else None
    prefix = codec.prefix()
    history: list = []  # emitted blocks (cumulative protocol)
    state = initial_state(adapter)
    tokens_used = decisions = backtracks = missed = repeats = illegal = 0
    seen: set = set()

    def done(solved, term, st):
        return EpisodeResult(solved, decisions, backtracks, tokens_used, term, missed, repeats, illegal,
                             dict(st.assignment) if solved else None)

    if adapter.is_goal(state):
        return done(True, "solved", state)
    while True:
        state_part = codec.state_tokens(state)
        if cfg.protocol == "cumulative":
            ctx = prefix + [t for b in history for t in b] + state_part
            spans, pos = [], len(prefix)
            for b in history + [state_part]:
                spans.append((pos, pos + len(b)))
                pos += len(b)
        else:
            ctx = prefix + state_part
            spans = [(len(prefix), len(ctx))]
        layout = Layout(len(ctx), (0, 0), (0, len(prefix)), spans)
        if log is not None:
            log.context_lengths.append(len(ctx))
        selectable = adapter.selectable(state)
        var_ids = {vocab.id(codec.var_token(v)): v for v in selectable} if vocab is not None else {}

        dist = None
        if agent is not None and (cfg.verifier == "model" or cfg.policy == "model"):
            try:
                dist = agent.dist(ctx, layout)
            except PositionOverflow:
                return done(False, "timeout", state)

        # verifier: continue or backtrack
        if cfg.verifier == "model":
            c = float(dist[agent.conflict_id])
            cont = float(sum(dist[i] for i in var_ids))
            p_bt = 1.0 if not var_ids else (0.0 if c == 0 else c / (c + cont))
            if log is not None:
                log.p_backtrack.append(p_bt)
            bt = p_bt > cfg.threshold
        elif cfg.verifier == "oracle":
            bt = state.conflict is not None
        elif cfg.verifier == "corrupted":
            bt = bool(cfg.corrupted(state, adapter))
        else:
            bt = _probe_verdict(state, adapter, cfg.probe_budget)
        if not bt and state.conflict is not None:
            missed += 1
        if not bt and not selectable:
            bt = True

        if bt:
            action = Action.backtrack()
            cost = BACKTRACK_TOKENS
        else:
            cost = BRANCH_TOKENS
            if cfg.policy == "oracle":
                action = occurrence_domain_policy(state, adapter, rng)
            else:
                if cfg.policy == "random-variable":
                    var = selectable[int(rng.integers(len(selectable)))]
                else:
                    vid, ok = _pick(dist, set(var_ids))
                    illegal += not ok
                    var = var_ids[vid]
                vals = {vocab.id(codec.value_token(x)): x for x in state.domains[var]}
                act_ctx = ctx + [codec.var_token(var)] + codec.between_tokens(state, var)
                spans2 = spans[:-1] + [(spans[-1][0], len(act_ctx))]
                try:
                    vdist = agent.dist(act_ctx, Layout(len(act_ctx), (0, 0), (0, len(prefix)), spans2))
                except PositionOverflow:
                    return done(False, "timeout", state)
                vid, ok = _pick(vdist, set(vals))
                illegal += not ok
                action = Action.branch(var, vals[vid])
            key = (frozenset(state.assignment.items()), action.var, action.value)
            repeats += key in seen
            seen.add(key)
        if cfg.budget is not None and tokens_used + cost > cfg.budget:
            return done(False, "timeout", state)
        ev = step(state, action, adapter, proactive=True)
        tokens_used += cost
        if bt:
            backtracks += 1
            if ev.outcome.kind == "failed":
                return done(False, "false-unsat" if adapter.is_satisfiable() else "exhausted", state)
        decisions += 1
        if cfg.protocol == "cumulative":
            history.append(encode_block(codec, ev)[0])
        state = ev.state_after
        if adapter.is_goal(state):
            return done(True, "solved", state)


def aggregate(results: list) -> SolveMetrics:
    if not results:
        raise InsufficientData("no episodes")
    n = len(results)
    rate = lambda term: sum(r.termination == term for r in results) / n
    branches = sum(r.decisions - r.backtracks for r in results)
    return SolveMetrics(
        solve_rate=rate("solved"), timeout_rate=rate("timeout"), false_unsat_rate=rate("false-unsat"),
        exhausted_rate=rate("exhausted"), mean_decisions=float(np.mean([r.decisions for r in results])),
        mean_backtracks=float(np.mean([r.backtracks for r in results])),
        repeat_rate=sum(r.repeats for r in results) / max(branches, 1), episodes=n)


def evaluate(model, vocab, instances: list, cfg: ProtocolConfig, seed: int = 0,
             results_out: Optional[list] = None) -> SolveMetrics:
    """Run one episode per instance with per-episode RNG streams."""
    if not instances:
        raise InsufficientData("evaluate needs at least one instance")
    streams = np.random.SeedSequence(seed).spawn(len(instances))
    results = [run_episode(model, vocab, inst, cfg, np.random.default_rng(s)) for inst, s in zip(instances, streams)]
    if results_out is not None:
        results_out.extend(results)
    return aggregate(results)
