"""Small decoder-only transformer with pluggable attention mask and
position scheme.

Two forward paths compute the same function:

* ``forward`` builds a dense (query x key) mask for a padded batch.  It is
  the training path.
* ``forward_exact`` processes one sequence segment by segment (slots plus
  prefix, then each block).  Each segment only ever touches its own rows
  and the keys its mask row-set allows, gathered in index order, so two
  inputs that agree on those keys produce bitwise-identical outputs.  It is
  used for inference and the invariance checks.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..codec.layout import Layout
from ..errors import InvalidParams, MalformedTrace, PositionOverflow, ShapeMismatch
from ..masks import NEG_INF, MaskSpec, build_mask, positions


@dataclass
class ModelConfig:
    vocab_size: int
    layers: int = 2
    dim: int = 64
    heads: int = 4
    ffn: int = 256
    slots: int = 8
    mask: str = "ssa-selective"
    positions: str = "block-relative"
    dropout: float = 0.0
    max_position: int = 2048

    def __post_init__(self):
        if self.dim % self.heads:
            raise InvalidParams("model dim must be divisible by heads")
        if self.slots < 0 or self.vocab_size <= 0 or self.layers < 0:
            raise InvalidParams("bad model sizes")
        if self.positions not in ("absolute", "block-relative"):
            raise InvalidParams(f"unknown position scheme {self.positions!r}")
        MaskSpec.parse(self.mask)

    @property
    def mask_spec(self) -> MaskSpec:
        return MaskSpec.parse(self.mask)


class Layer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.heads = cfg.heads
        self.ln1 = nn.LayerNorm(cfg.dim)
        self.qkv = nn.Linear(cfg.dim, 3 * cfg.dim)
        self.proj = nn.Linear(cfg.dim, cfg.dim)
        self.ln2 = nn.LayerNorm(cfg.dim)
        self.fc1 = nn.Linear(cfg.dim, cfg.ffn)
        self.fc2 = nn.Linear(cfg.ffn, cfg.dim)
        self.drop = nn.Dropout(cfg.dropout)

    def split(self, x):
        # (..., T, 3d) -> three tensors (..., h, T, dh)
        *lead, t, d3 = x.shape
        d = d3 // 3
        qkv = x.view(*lead, t, 3, self.heads, d // self.heads)
        qkv = qkv.movedim(-3, 0).transpose(-3, -2)
        return qkv[0], qkv[1], qkv[2]

    def attend(self, q, k, v, add_mask):
        scores = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1]) + add_mask
        att = self.drop(torch.softmax(scores, dim=-1))
        out = att @ v  # (..., h, T, dh)
        out = out.transpose(-3, -2)
        return out.reshape(*out.shape[:-2], -1)

    def mlp(self, x):
        return self.drop(self.fc2(F.gelu(self.fc1(self.ln2(x)))))

    def forward(self, x, add_mask):
        q, k, v = self.split(self.qkv(self.ln1(x)))
        x = x + self.drop(self.proj(self.attend(q, k, v, add_mask.unsqueeze(-3))))
        return x + self.mlp(x)


class TinyTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig, seed: Optional[int] = None):
        super().__init__()
        self.cfg = cfg
        gen = torch.Generator().manual_seed(0 if seed is None else seed)
        self.tok = nn.Embedding(cfg.vocab_size, cfg.dim)
        self.pos = nn.Embedding(cfg.max_position, cfg.dim)
        self.slot = nn.Parameter(torch.zeros(cfg.slots, cfg.dim))
        self.layers = nn.ModuleList([Layer(cfg) for _ in range(cfg.layers)])
        self.ln_f = nn.LayerNorm(cfg.dim)
        self.head = nn.Linear(cfg.dim, cfg.vocab_size)
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
                elif "ln" in name:
                    p.fill_(1.0)
                else:
                    p.copy_(torch.randn(p.shape, generator=gen) * 0.02)

    # shared helpers

    def _layout(self, layout: Layout, n_tokens: int) -> Layout:
        if layout.length != n_tokens:
            raise ShapeMismatch(f"layout covers {layout.length} tokens, got {n_tokens}")
        full = layout.with_slots(self.cfg.slots)
        full.validate()
        return full

    def _embed(self, ids: torch.Tensor, full: Layout) -> torch.Tensor:
        if ids.numel() and int(ids.max()) >= self.cfg.vocab_size:
            raise ShapeMismatch("token id outside the vocabulary")
        pos = positions(full, self.cfg.positions)
        if pos.size and pos.max() >= self.cfg.max_position:
            raise PositionOverflow(f"position {int(pos.max())} >= {self.cfg.max_position}")
        x = torch.cat([self.slot, self.tok(ids)], dim=0)
        return x + self.pos(torch.as_tensor(pos))

    # dense path

    def forward(self, ids: torch.Tensor, layouts: list) -> torch.Tensor:
        """Batched logits (B, T, V) for right-padded ids (B, T).

        Slot positions are dropped from the output; padded positions produce
        logits that should be ignored.
        """
        if ids.dim() == 1:
            return self.forward(ids.unsqueeze(0), [layouts])[0]
        b, t = ids.shape
        r = self.cfg.slots
        n = t + r
        spec = self.cfg.mask_spec
        xs, masks = [], []
        for i, lay in enumerate(layouts):
            full = self._layout(lay, lay.length)
            m = np.eye(n, dtype=bool)
            m[: full.length, : full.length] = build_mask(full, spec)
            masks.append(m)
            x = self._embed(ids[i, : lay.length], full)
            if lay.length < t:
                x = torch.cat([x, x.new_zeros(t - lay.length, self.cfg.dim)], dim=0)
            xs.append(x)
        x = torch.stack(xs)
        add = torch.from_numpy(np.where(np.stack(masks), 0.0, NEG_INF)).to(x.dtype)
        for layer in self.layers:
            x = layer(x, add)
        return self.head(self.ln_f(x[:, r:]))

    # segment-wise exact path

    @torch.no_grad()
    def forward_exact(self, ids, layout: Layout, return_hidden: bool = False):
        """Logits (T, V) for one sequence, computed segment by segment."""
        ids = torch.as_tensor(ids, dtype=torch.long)
        full = self._layout(layout, int(ids.shape[0]))
        mask = build_mask(full, self.cfg.mask_spec)
        segs = [(0, full.prefix[1])] + [tuple(b) for b in full.blocks]
        segs = [s for s in segs if s[1] > s[0]]
        plans = []
        for s, e in segs:
            keys = np.flatnonzero(mask[s:e].any(axis=0))
            sub = mask[s:e][:, keys]
            plans.append((s, e, torch.as_tensor(keys),
                          torch.from_numpy(np.where(sub, 0.0, NEG_INF)).to(self.slot.dtype)))
        x = self._embed(ids, full)
        parts = [x[s:e] for s, e, _, _ in plans]
        hidden = [torch.cat(parts)[self.cfg.slots:]]
        for layer in self.layers:
            qs, ks, vs = [], [], []
            for p in parts:
                q, k, v = layer.split(layer.qkv(layer.ln1(p)))
                qs.append(q)
                ks.append(k)
                vs.append(v)
            k_all = torch.cat(ks, dim=-2)
            v_all = torch.cat(vs, dim=-2)
            new = []
            for p, q, (s, e, keys, add) in zip(parts, qs, plans):
                k = k_all.index_select(-2, keys)
                v = v_all.index_select(-2, keys)
                y = p + layer.proj(layer.attend(q, k, v, add))
                new.append(y + layer.mlp(y))
            parts = new
            hidden.append(torch.cat(parts)[self.cfg.slots:])
        logits = torch.cat([self.head(self.ln_f(p)) for p in parts])[self.cfg.slots:]
        return (logits, hidden) if return_hidden else logits


def next_token_dist(model: TinyTransformer, ids, layout: Layout, admissible=None) -> np.ndarray:
    """Softmax of the last position's logits, optionally renormalized over
    the admissible token ids."""
    if layout is None or layout.length == 0:
        raise MalformedTrace("empty context")
    logits = model.forward_exact(ids, layout)[-1].double()
    if admissible is not None:
        idx = torch.as_tensor(sorted(set(admissible)), dtype=torch.long)
        if idx.numel() == 0:
            raise InvalidParams("empty admissible set")
        keep = torch.full_like(logits, -math.inf)
        keep[idx] = logits[idx]
        logits = keep
    return torch.softmax(logits, dim=-1).numpy()


def p_backtrack_from_dist(dist: np.ndarray, conflict_id: int, continue_ids) -> float:
    """Conflict mass over conflict plus admissible continue mass."""
    c = float(dist[conflict_id])
    cont = float(sum(dist[i] for i in continue_ids))
    if not list(continue_ids):
        return 1.0
    if c == 0.0:
        return 0.0
    return c / (c + cont)


# checkpoints: 8-byte little-endian header length, JSON header, float32 payload

def save_checkpoint(model: TinyTransformer, path, extra: Optional[dict] = None) -> None:
    tensors, blobs, offset = [], [], 0
    for name, t in model.state_dict().items():
        arr = t.detach().cpu().numpy().astype("<f4")
        raw = arr.tobytes(order="C")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"config": asdict(model.cfg), "tensors": tensors, "extra": extra or {}},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> tuple[TinyTransformer, dict]:
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen))
        payload = fh.read()
    model = TinyTransformer(ModelConfig(**header["config"]))
    state = {}
    for t in header["tensors"]:
        arr = np.frombuffer(payload, dtype="<f4", count=t["nbytes"] // 4, offset=t["offset"])
        state[t["name"]] = torch.from_numpy(arr.reshape(t["shape"]).astype(np.float32))
    model.load_state_dict(state)
    model.eval()
    return model, header.get("extra", {})
