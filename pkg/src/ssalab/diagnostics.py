"""History-transplant pairs, padding control, the verifier-only probe bank
and calibration metrics."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .codec.encode import Trace, encode_trace, make_codec
from .codec.layout import Layout
from .domains import make_adapter
from .errors import DegenerateLabels, InvalidParams, NoPairsFound, UnknownToken, VocabularyMismatch
from .search.core import ReactiveOracle, run_search
from .search.policies import TopKSampler


@dataclass
class Rollout:
    instance_id: int
    adapter: object
    events: list
    trace: Trace


@dataclass
class DecisionPoint:
    rollout: Rollout
    t: int  # 1-based block index

    @property
    def state(self):
        return self.rollout.events[self.t - 1].state_before

    @property
    def state_tokens(self) -> list:
        tr = self.rollout.trace
        s, _ = tr.blocks[self.t - 1]
        return tr.tokens[s:tr.state_end(self.t)]

    @property
    def history_tokens(self) -> list:
        tr = self.rollout.trace
        return tr.tokens[tr.prefix_len:tr.blocks[self.t - 1][0]]

    def key(self) -> str:
        return canonical_key(self.state_tokens, self.state.conflict is not None, self.state.level)

    def context(self, protocol: str = "cumulative", donors: Optional[list] = None) -> tuple[list, Layout]:
        """Prefix, optional donor blocks, history (cumulative only), then the state part."""
        tr = self.rollout.trace
        blocks = list(donors or [])
        if protocol == "cumulative":
            blocks += [tr.block_tokens(i) for i in range(1, self.t)]
        elif protocol != "state-rebuilt":
            raise InvalidParams(f"unknown protocol {protocol!r}")
        blocks.append(self.state_tokens)
        tokens = list(tr.prefix)
        spans = []
        for b in blocks:
            spans.append((len(tokens), len(tokens) + len(b)))
            tokens += b
        return tokens, Layout(len(tokens), (0, 0), (0, tr.prefix_len), spans)

    def action_ids(self, vocab) -> tuple[int, list]:
        codec = make_codec(self.rollout.adapter)
        var_ids = [vocab.id(codec.var_token(v)) for v in self.rollout.adapter.selectable(self.state)]
        return vocab.id("CONFLICT"), var_ids


def canonical_key(state_tokens, conflict: bool, depth: int) -> str:
    text = " ".join(state_tokens) + f"|{int(conflict)}|{depth}"
    return hashlib.blake2b(text.encode(), digest_size=12).hexdigest()


def collect_rollouts(instances, per_instance: int = 4, seed: int = 0, fmt: str = "enriched", k: int = 3,
                     temperature: float = 1.0, max_steps: int = 400) -> list:
    """Stochastic top-k rollouts with reactive oracle verification."""
    out = []
    for i, inst in enumerate(instances):
        for child in np.random.SeedSequence([seed, i]).spawn(per_instance):
            adapter = make_adapter(inst)
            res, events = run_search(adapter, TopKSampler(k, temperature), ReactiveOracle(), None,
                                     np.random.default_rng(child), satisfiable=True, max_steps=max_steps)
            tr = encode_trace(events, make_codec(adapter, fmt), termination=res.termination)
            out.append(Rollout(i, adapter, events, tr))
    return out


@dataclass
class TransplantPair:
    a: DecisionPoint
    b: DecisionPoint
    key: str


def build_transplant_pairs(rollouts, max_per_key: int = 4, strict: bool = False) -> list:
    """Pair decision points from different rollouts of the same instance whose
    canonical state block, conflict flag and depth agree but whose histories
    differ."""
    groups: dict = {}
    for ri, r in enumerate(rollouts):
        for t in range(1, len(r.events) + 1):
            dp = DecisionPoint(r, t)
            groups.setdefault((r.instance_id, dp.key()), []).append((ri, dp))
    pairs = []
    for (inst, key), items in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        made = 0
        for x in range(len(items)):
            for y in range(x + 1, len(items)):
                (ra, a), (rb, b) = items[x], items[y]
                if ra == rb or a.history_tokens == b.history_tokens or made >= max_per_key:
                    continue
                pairs.append(TransplantPair(a, b, key))
                made += 1
    if strict and not pairs:
        raise NoPairsFound("no decision points share a canonical state across histories")
    return pairs


def symmetric_kl(p, q, eps: float = 0.0) -> float:
    p = np.asarray(p, dtype=float) + eps
    q = np.asarray(q, dtype=float) + eps
    m = (p > 0) & (q > 0)
    return float(np.sum(p[m] * np.log(p[m] / q[m])) + np.sum(q[m] * np.log(q[m] / p[m])))


def _dist(model, vocab, tokens, layout):
    import torch
    try:
        ids = vocab.encode(tokens)
    except UnknownToken as e:
        raise VocabularyMismatch(str(e)) from None
    logits = model.forward_exact(torch.as_tensor(ids), layout)[-1].double()
    return torch.softmax(logits, -1).numpy()


def transplant_metrics(model, vocab, pairs, protocol: str = "cumulative") -> tuple[float, float, list]:
    """(argmax agreement %, mean symmetric KL, per-pair KL) at the action position."""
    if not pairs:
        return 100.0, 0.0, []
    agree, kls = 0, []
    for pr in pairs:
        p = _dist(model, vocab, *pr.a.context(protocol))
        q = _dist(model, vocab, *pr.b.context(protocol))
        agree += int(np.argmax(p) == np.argmax(q))
        kls.append(symmetric_kl(p, q))
    return 100.0 * agree / len(pairs), float(np.mean(kls)), kls


def padding_control(model, vocab, points, donor_blocks, count: int = 3, seed: int = 0) -> tuple[float, int]:
    """Argmax agreement % (over admissible action tokens) after inserting
    ``count`` unrelated decision blocks right after the prefix."""
    rng = np.random.default_rng(seed)
    same = 0
    for dp in points:
        admissible = [dp.action_ids(vocab)[0], *dp.action_ids(vocab)[1]]
        base = _dist(model, vocab, *dp.context("cumulative"))
        donors = [donor_blocks[int(i)] for i in rng.choice(len(donor_blocks), size=count)] if count else []
        padded = _dist(model, vocab, *dp.context("cumulative", donors))
        same += admissible[int(np.argmax(base[admissible]))] == admissible[int(np.argmax(padded[admissible]))]
    return (100.0 * same / len(points) if points else 100.0), len(points) - same


def p_backtrack(dist, conflict_id: int, continue_ids) -> float:
    """Conflict mass over conflict plus admissible-continue mass."""
    continue_ids = list(continue_ids)
    c = float(dist[conflict_id])
    if not continue_ids:
        return 1.0
    cont = float(np.sum(np.asarray(dist)[continue_ids]))
    if c == 0.0:
        return 0.0
    return c / (c + cont)


# calibration and ranking metrics

def auroc(scores, labels) -> float:
    """Rank statistic with tie-averaged ranks."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise DegenerateLabels("AUROC needs both classes")
    r = rankdata(s)
    return float((r[y == 1].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def auprc(scores, labels) -> float:
    from sklearn.metrics import average_precision_score
    y = np.asarray(labels).astype(int)
    if y.min() == y.max():
        raise DegenerateLabels("AUPRC needs both classes")
    return float(average_precision_score(y, np.asarray(scores, dtype=float)))


def ece_equal_mass(scores, labels, bins: int = 15) -> float:
    """Expected calibration error over equal-mass bins (ties by score, then index)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if len(s) == 0:
        return 0.0
    order = np.argsort(s, kind="stable")
    err = 0.0
    for chunk in np.array_split(order, min(bins, len(s))):
        if len(chunk):
            err += len(chunk) / len(s) * abs(y[chunk].mean() - s[chunk].mean())
    return float(err)


def brier(scores, labels) -> float:
    s = np.asarray(scores, dtype=float)
    return float(np.mean((s - np.asarray(labels, dtype=float)) ** 2))


@dataclass
class VerifierMetrics:
    alpha_v: float
    beta: float
    auroc: Optional[float]
    auprc: Optional[float]
    ece: float
    brier: float
    prevalence: float
    delta_auroc: Optional[float] = None

    def as_row(self) -> dict:
        return dict(self.__dict__)


def verifier_metrics(scores, labels, scores_sr=None, threshold: float = 0.5, bins: int = 15) -> VerifierMetrics:
    """Label 1 means backtrack is correct.  With ``scores_sr`` (the same bank
    scored under state-rebuilt inference) the AUROC difference is filled in."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape:
        raise InvalidParams("scores and labels differ in length")
    neg, pos = y == 0, y == 1
    alpha_v = float(np.mean(s[neg] > threshold)) if neg.any() else 0.0
    beta = float(np.mean(s[pos] <= threshold)) if pos.any() else 0.0
    try:
        a = auroc(s, y)
        ap = auprc(s, y)
    except DegenerateLabels:
        a = ap = None
    delta = None
    if scores_sr is not None and a is not None:
        delta = a - auroc(scores_sr, y)
    return VerifierMetrics(alpha_v, beta, a, ap, ece_equal_mass(s, y, bins), brier(s, y), float(y.mean()), delta)


# probe bank

@dataclass
class ProbeEntry:
    key: str
    label: int  # 1 iff propagation exposed a contradiction
    points: list  # DecisionPoints reaching this state through different histories


def build_probe_bank(rollouts, min_histories: int = 2) -> list:
    groups: dict = {}
    for r in rollouts:
        for t in range(1, len(r.events) + 1):
            dp = DecisionPoint(r, t)
            g = groups.setdefault((r.instance_id, dp.key()), [])
            if all(dp.history_tokens != o.history_tokens for o in g):
                g.append(dp)
    bank = []
    for (inst, key), pts in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        if len(pts) >= min_histories:
            bank.append(ProbeEntry(key, int(pts[0].state.conflict is not None), pts))
    return bank


def score_bank(model, vocab, bank, protocol: str) -> tuple[np.ndarray, np.ndarray]:
    """p_backtrack per (entry, history) under a protocol, with labels."""
    scores, labels = [], []
    for entry in bank:
        for dp in entry.points:
            dist = _dist(model, vocab, *dp.context(protocol))
            c, cont = dp.action_ids(vocab)
            scores.append(p_backtrack(dist, c, cont))
            labels.append(entry.label)
    return np.array(scores), np.array(labels)


def bank_to_json(bank) -> str:
    return json.dumps([{"key": e.key, "label": e.label,
                        "histories": [{"instance": p.rollout.instance_id, "block": p.t} for p in e.points]}
                       for e in bank], indent=1)
