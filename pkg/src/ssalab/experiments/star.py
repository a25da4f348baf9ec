"""Star-tree branching-factor sweep.

A star tree has one root and k leaves.  Every return to the root asks the
model to verify whether all k children have been visited: RET when they
have, another child otherwise.  The prefix lists children in sorted id
order while the traversal follows a random stored order, so the check needs
the whole visited set.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from ..codec.encode import encode_tree_trace
from ..codec.layout import layout_of
from ..codec.vocab import tree_vocab
from ..domains.trees import star_tree
from ..model import ModelConfig, TrainConfig, example_from_trace, train
from ..theory import fit_rk

ENCODINGS = ("simple", "mid", "verbose")


@dataclass
class StarConfig:
    ks: tuple = (4, 8, 16)
    encodings: tuple = ("simple", "verbose")
    train_trees: int = 2000
    test_trees: int = 200
    id_pool: int = 48
    epochs: int = 6
    lr: float = 1e-3
    batch_size: int = 16
    layers: int = 2
    dim: int = 64
    heads: int = 4
    ffn: int = 128
    mask: str = "causal"
    positions: str = "absolute"


def star_traces(k: int, count: int, fmt: str, seed: int, id_pool: int) -> list:
    rng = np.random.default_rng(seed)
    return [encode_tree_trace(star_tree(k, rng, id_pool), fmt, "dfs", prefix_order="sorted") for _ in range(count)]


@torch.no_grad()
def verification_accuracy(model, vocab, traces) -> float:
    """Fraction of trees where every root decision (RET versus continue)
    is right under teacher forcing."""
    ret = vocab.id("RET")
    ok = 0
    for tr in traces:
        ids = torch.as_tensor(vocab.encode(tr.tokens))
        logits = model.forward_exact(ids, layout_of(tr))
        root = tr.tokens[tr.prefix_len + 1]
        good = True
        for t, (s, e) in enumerate(tr.blocks, start=1):
            if tr.tokens[s + 1] != root:
                continue
            pos = tr.actions[t - 1][0]
            pred_ret = int(torch.argmax(logits[pos - 1])) == ret
            if pred_ret != (tr.tokens[pos] == "RET"):
                good = False
                break
        ok += good
    return ok / max(len(traces), 1)


@dataclass
class StarResult:
    accuracy: dict = field(default_factory=dict)  # (encoding, k) -> all-correct accuracy
    r_hat: float = 0.0
    predicted: dict = field(default_factory=dict)
    seconds: float = 0.0


def run_star_sweep(cfg: StarConfig, seed: int = 0, log=None) -> StarResult:
    t0 = time.time()
    vocab = tree_vocab(cfg.id_pool)
    out = StarResult()
    for fmt in cfg.encodings:
        for k in cfg.ks:
            train_tr = star_traces(k, cfg.train_trees, fmt, seed * 7919 + k, cfg.id_pool)
            test_tr = star_traces(k, cfg.test_trees, fmt, 10_000_000 + seed * 7919 + k, cfg.id_pool)
            longest = max(len(t.tokens) for t in train_tr + test_tr)
            mcfg = ModelConfig(vocab_size=len(vocab), layers=cfg.layers, dim=cfg.dim, heads=cfg.heads,
                               ffn=cfg.ffn, slots=0, mask=cfg.mask, positions=cfg.positions,
                               max_position=longest + 8)
            examples = [example_from_trace(t, vocab) for t in train_tr]
            model, _ = train(mcfg, TrainConfig(lr=cfg.lr, epochs=cfg.epochs, batch_size=cfg.batch_size,
                                               seed=seed), examples)
            out.accuracy[(fmt, k)] = verification_accuracy(model, vocab, test_tr)
            if log:
                log(f"{fmt} k={k} accuracy {out.accuracy[(fmt, k)]:.3f}")
    if "simple" in cfg.encodings and cfg.ks and min(cfg.ks) == 4:
        simple = {k: out.accuracy[("simple", k)] for k in cfg.ks}
        if simple[4] > 0:
            out.r_hat, out.predicted = fit_rk(simple)
    out.seconds = time.time() - t0
    return out
