"""Desk-scale SAT pipeline: generate traces, train SSA and causal models,
evaluate under both inference protocols and run the history diagnostics."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..codec.encode import encode_trace, make_codec
from ..codec.vocab import sat_vocab
from ..diagnostics import (DecisionPoint, build_probe_bank, build_transplant_pairs, collect_rollouts,
                           padding_control, score_bank, transplant_metrics, verifier_metrics)
from ..domains import SatAdapter, generate_instance
from ..inference import ProtocolConfig, evaluate
from ..model import ModelConfig, TrainConfig, example_from_trace, train
from ..search.core import ReactiveOracle, run_search
from ..search.policies import TopKSampler

log = logging.getLogger(__name__)

MODEL_VARIANTS = {
    "ssa": ("ssa-selective", "block-relative"),
    "causal": ("causal", "absolute"),
}
TEST_SEED_OFFSET = 1_000_000


@dataclass
class DeskConfig:
    n: int = 10
    ratio: float = 4.0
    train_traces: int = 500
    test_instances: int = 100
    epochs: int = 12
    lr: float = 1e-3
    batch_size: int = 8
    budget: int = 820  # 4096 scaled by n / 50
    fmt: str = "enriched"
    layers: int = 2
    dim: int = 64
    heads: int = 4
    ffn: int = 256
    slots: int = 8


def sat_dataset(n: int, count: int, seed: int, ratio: float = 4.0, fmt: str = "enriched",
                first_instance: int = 0) -> tuple[list, list]:
    """(traces, instances) from top-k rollouts with reactive oracle verification."""
    traces, insts = [], []
    for i in range(count):
        inst_seed = first_instance + i
        cnf = generate_instance("sat-planted", {"n": n, "alpha": ratio}, inst_seed)
        adapter = SatAdapter(cnf)
        rng = np.random.default_rng([seed, inst_seed])
        res, events = run_search(adapter, TopKSampler(), ReactiveOracle(), None, rng, satisfiable=True)
        traces.append(encode_trace(events, make_codec(adapter, fmt), termination=res.termination))
        insts.append(cnf)
    return traces, insts


def desk_vocab(n: int, ratio: float = 4.0):
    return sat_vocab(n, int(round(ratio * n)), n)


def train_variant(variant: str, traces, vocab, cfg: DeskConfig, seed: int):
    mask, pos = MODEL_VARIANTS[variant]
    mcfg = ModelConfig(vocab_size=len(vocab), layers=cfg.layers, dim=cfg.dim, heads=cfg.heads, ffn=cfg.ffn,
                       slots=cfg.slots, mask=mask, positions=pos,
                       max_position=max(len(t.tokens) for t in traces) + cfg.slots + 1024)
    examples = [example_from_trace(t, vocab) for t in traces]
    model, hist = train(mcfg, TrainConfig(lr=cfg.lr, epochs=cfg.epochs, batch_size=cfg.batch_size, seed=seed),
                        examples)
    return model, hist


@dataclass
class DeskResult:
    seed: int
    solve: dict = field(default_factory=dict)  # (variant, protocol) -> SolveMetrics
    transplant: dict = field(default_factory=dict)  # variant -> (agreement %, mean KL, max KL)
    delta_auroc: dict = field(default_factory=dict)  # variant -> (delta, scores equal?)
    losses: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    seconds: float = 0.0


def run_desk_seed(cfg: DeskConfig, seed: int, protocols=("state-rebuilt",), diagnostics: bool = True,
                  keep_models: bool = False) -> DeskResult:
    t0 = time.time()
    vocab = desk_vocab(cfg.n, cfg.ratio)
    traces, _ = sat_dataset(cfg.n, cfg.train_traces, seed, cfg.ratio, cfg.fmt, first_instance=seed * 100_000)
    test = [generate_instance("sat-planted", {"n": cfg.n, "alpha": cfg.ratio}, TEST_SEED_OFFSET + i)
            for i in range(cfg.test_instances)]
    out = DeskResult(seed)
    rollouts = pairs = bank = None
    if diagnostics:
        rollouts = collect_rollouts(test[:40], per_instance=4, seed=seed, fmt=cfg.fmt)
        pairs = build_transplant_pairs(rollouts)
        bank = build_probe_bank(rollouts)
    for variant in MODEL_VARIANTS:
        model, hist = train_variant(variant, traces, vocab, cfg, seed)
        out.losses[variant] = hist
        for proto in protocols:
            pc = ProtocolConfig(protocol=proto, budget=cfg.budget, fmt=cfg.fmt)
            out.solve[(variant, proto)] = evaluate(model, vocab, test, pc, seed=seed)
            log.info("seed %d %s %s solve %.3f", seed, variant, proto, out.solve[(variant, proto)].solve_rate)
        if diagnostics:
            agree, mean_kl, kls = transplant_metrics(model, vocab, pairs)
            out.transplant[variant] = (agree, mean_kl, max(kls) if kls else 0.0, len(pairs))
            s_cum, y = score_bank(model, vocab, bank, "cumulative")
            s_sr, _ = score_bank(model, vocab, bank, "state-rebuilt")
            vm = verifier_metrics(s_cum, y, s_sr)
            out.delta_auroc[variant] = (vm.delta_auroc, bool(np.array_equal(s_cum, s_sr)), len(y))
        if keep_models:
            out.models[variant] = model
    out.seconds = time.time() - t0
    return out
