"""Attention masks and positional index schemes over region layouts.

Masks are boolean (query x key), True meaning the query may attend to the
key.  The model turns False entries into an additive -1e9 before softmax.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .codec.layout import Layout
from .errors import InvalidLayout, InvalidParams

MASK_KINDS = ("causal", "ssa-selective", "ssa-blanket", "swa-prefix", "current-block-only",
              "reverse-selective", "random-matched")
NEG_INF = -1e9


@dataclass(frozen=True)
class MaskSpec:
    kind: str = "ssa-selective"
    window: Optional[int] = None  # swa-prefix: number of most recent block tokens
    seed: Optional[int] = None  # random-matched

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise InvalidParams(f"unknown mask kind {self.kind!r}")
        if self.kind == "swa-prefix" and (self.window is None or self.window < 0):
            raise InvalidParams("swa-prefix needs a window W >= 0")
        if self.kind == "random-matched" and self.seed is None:
            raise InvalidParams("random-matched needs a seed")

    @staticmethod
    def parse(text: str) -> "MaskSpec":
        """'causal', 'ssa-selective', 'swa-prefix:16', 'random-matched:7', ..."""
        kind, _, arg = text.partition(":")
        if kind == "swa-prefix":
            return MaskSpec(kind, window=int(arg))
        if kind == "random-matched":
            return MaskSpec(kind, seed=int(arg or 0))
        return MaskSpec(kind)

    def __str__(self) -> str:
        if self.kind == "swa-prefix":
            return f"swa-prefix:{self.window}"
        if self.kind == "random-matched":
            return f"random-matched:{self.seed}"
        return self.kind


def region_ids(layout: Layout) -> np.ndarray:
    """Per-token region: -2 slot, -1 prefix, i >= 0 for block i."""
    layout.validate()
    rid = np.empty(layout.length, dtype=np.int64)
    rid[layout.slots[0]:layout.slots[1]] = -2
    rid[layout.prefix[0]:layout.prefix[1]] = -1
    for i, (s, e) in enumerate(layout.blocks):
        rid[s:e] = i
    return rid


def _selective(layout: Layout) -> np.ndarray:
    n = layout.length
    rid = region_ids(layout)
    q = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    rq, rk = rid[:, None], rid[None, :]
    slot_k = rk == -2
    pref_k = rk == -1
    m = np.zeros((n, n), dtype=bool)
    m |= (rq == -2) & (slot_k | pref_k)
    m |= (rq == -1) & (slot_k | (pref_k & (k <= q)))
    m |= (rq >= 0) & (slot_k | pref_k | ((rk == rq) & (k <= q)))
    return m


def build_mask(layout: Layout, spec: MaskSpec) -> np.ndarray:
    n = layout.length
    if n == 0:
        return np.zeros((0, 0), dtype=bool)
    rid = region_ids(layout)
    q = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    rq, rk = rid[:, None], rid[None, :]
    causal = k <= q
    if spec.kind == "causal":
        return causal.copy()
    sel = _selective(layout)
    if spec.kind == "ssa-selective":
        return sel
    block_q = rq >= 0
    slot_k = rk == -2
    same_block = (rk == rq) & causal
    if spec.kind == "ssa-blanket":
        return np.where(block_q, slot_k | same_block, sel)
    if spec.kind == "swa-prefix":
        first_block = layout.prefix[1]
        recent = (rk >= 0) & causal & ((q - k < spec.window) | (k == q)) & (k >= first_block)
        return np.where(block_q, slot_k | (rk == -1) | recent, sel)
    if spec.kind == "current-block-only":
        return np.where(block_q, same_block, sel)
    if spec.kind == "reverse-selective":
        earlier = (rk >= 0) & (rk < rq)
        return np.where(block_q, slot_k | earlier | same_block, sel)
    if spec.kind == "random-matched":
        target = int(sel.sum())
        rng = np.random.default_rng(spec.seed)
        m = np.eye(n, dtype=bool)
        off = np.flatnonzero(~m.ravel())
        extra = max(0, min(target - n, off.size))
        m.ravel()[rng.choice(off, size=extra, replace=False)] = True
        return m
    raise InvalidParams(f"unknown mask kind {spec.kind!r}")


def positions(layout: Layout, scheme: str = "absolute") -> np.ndarray:
    """Absolute running index, or block-relative: every block restarts
    right after the prefix (slots and prefix keep absolute indices)."""
    n = layout.length
    pos = np.arange(n, dtype=np.int64)
    if scheme == "absolute":
        return pos
    if scheme != "block-relative":
        raise InvalidParams(f"unknown position scheme {scheme!r}")
    base = layout.prefix[1]
    for s, e in layout.blocks:
        pos[s:e] = base + np.arange(e - s)
    return pos


def mask_to_csv(mask: np.ndarray) -> str:
    buf = io.StringIO()
    for row in mask.astype(int):
        buf.write(",".join(str(x) for x in row) + "\n")
    return buf.getvalue()


def mask_from_csv(text: str) -> np.ndarray:
    rows = [[int(x) for x in line.split(",")] for line in text.strip().splitlines()]
    return np.array(rows, dtype=bool)


def additive_mask(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 0.0, NEG_INF).astype(np.float32)


def layout_from_lengths(slots: int, prefix: int, blocks) -> Layout:
    spans, pos = [], slots + prefix
    for b in blocks:
        spans.append((pos, pos + b))
        pos += b
    if min([slots, prefix, *blocks], default=0) < 0:
        raise InvalidLayout("negative span length")
    return Layout(pos, (0, slots), (slots, slots + prefix), spans)
