"""Next-token training on encoded traces."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import torch
import torch.nn.functional as F

from ..codec.encode import Trace
from ..codec.layout import Layout, layout_of
from ..errors import InvalidParams, NonFiniteLoss
from .transformer import ModelConfig, TinyTransformer

log = logging.getLogger(__name__)

LOSS_MASKS = ("blocks", "actions")


@dataclass
class TrainConfig:
    lr: float = 3e-4
    weight_decay: float = 0.01
    epochs: int = 10
    batch_size: int = 8
    seed: int = 0
    loss_mask: str = "blocks"  # blocks: every block token; actions: model-emitted tokens only
    clip: float = 1.0

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidParams("learning rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidParams("epochs >= 0 and batch size >= 1 required")
        if self.loss_mask not in LOSS_MASKS:
            raise InvalidParams(f"unknown loss mask {self.loss_mask!r}")


@dataclass
class Example:
    ids: np.ndarray
    layout: Layout
    targets: np.ndarray  # bool per position: token is a supervised target


def example_from_trace(trace: Trace, vocab, loss_mask: str = "blocks") -> Example:
    ids = np.asarray(vocab.encode(trace.tokens), dtype=np.int64)
    targets = np.zeros(len(ids), dtype=bool)
    if loss_mask == "blocks":
        targets[trace.prefix_len:] = True
    elif loss_mask == "actions":
        for acts in trace.actions:
            targets[list(acts)] = True
    else:
        raise InvalidParams(f"unknown loss mask {loss_mask!r}")
    targets[0] = False
    return Example(ids, layout_of(trace), targets)


def _batch(examples):
    t = max(len(e.ids) for e in examples)
    ids = torch.zeros(len(examples), t, dtype=torch.long)
    tgt = torch.zeros(len(examples), t, dtype=torch.bool)
    for i, e in enumerate(examples):
        ids[i, : len(e.ids)] = torch.from_numpy(e.ids)
        tgt[i, : len(e.ids)] = torch.from_numpy(e.targets)
    return ids, tgt, [e.layout for e in examples]


def batch_loss(model: TinyTransformer, examples) -> tuple[torch.Tensor, int]:
    ids, tgt, layouts = _batch(examples)
    logits = model(ids, layouts)
    # position j-1 predicts token j
    pred = logits[:, :-1]
    gold = ids[:, 1:]
    sel = tgt[:, 1:]
    n = int(sel.sum())
    if n == 0:
        return logits.sum() * 0.0, 0
    return F.cross_entropy(pred[sel], gold[sel]), n


def _batches(examples, batch_size, rng):
    # length-bucketed batches in a seeded random order
    order = sorted(range(len(examples)), key=lambda i: (len(examples[i].ids), i))
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    rng.shuffle(chunks)
    return chunks


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, examples: list, model: Optional[TinyTransformer] = None,
          on_epoch: Optional[Callable] = None) -> tuple[TinyTransformer, list]:
    """Train with AdamW (decoupled weight decay) and global-norm clipping.

    Returns the model and the per-epoch mean loss.  Deterministic given the
    seed on a fixed thread count.
    """
    torch.manual_seed(train_cfg.seed)
    if model is None:
        model = TinyTransformer(model_cfg, seed=train_cfg.seed)
    if train_cfg.epochs == 0 or not examples:
        return model, []
    opt = torch.optim.AdamW(model.parameters(), lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
    rng = np.random.default_rng(train_cfg.seed)
    history = []
    model.train()
    for epoch in range(train_cfg.epochs):
        total, count = 0.0, 0
        for step_i, chunk in enumerate(_batches(examples, train_cfg.batch_size, rng)):
            loss, n = batch_loss(model, [examples[i] for i in chunk])
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"loss {loss.item()} at epoch {epoch} batch {step_i}")
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.clip)
            opt.step()
            total += loss.item() * n
            count += n
        history.append(total / max(count, 1))
        log.info("epoch %d loss %.4f", epoch, history[-1])
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    model.eval()
    return model, history


@torch.no_grad()
def token_accuracy(model: TinyTransformer, examples: list, batch_size: int = 16) -> float:
    """Teacher-forced next-token accuracy over supervised positions."""
    model.eval()
    hit = tot = 0
    for i in range(0, len(examples), batch_size):
        ids, tgt, layouts = _batch(examples[i:i + batch_size])
        pred = model(ids, layouts)[:, :-1].argmax(-1)
        sel = tgt[:, 1:]
        hit += int((pred[sel] == ids[:, 1:][sel]).sum())
        tot += int(sel.sum())
    return hit / max(tot, 1)
