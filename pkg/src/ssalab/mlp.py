"""State-only MLP baseline: per-variable features, shared scorer.

The predictor sees only the canonical state, never the trajectory, so it
behaves identically under both inference protocols.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .domains.coloring import ColoringAdapter
from .domains.sat import SatAdapter
from .errors import InsufficientData
from .search.core import Action
from .search.policies import sat_occurrences

VAR_FEATURES = ("assigned", "sign", "forced", "pos_occ", "neg_occ", "domain_size")
GLOBAL_FEATURES = ("conflict", "assigned_frac")


def state_features(state, adapter) -> tuple[np.ndarray, np.ndarray]:
    """(num_vars x 6 per-variable features, 2 global features)."""
    variables = list(adapter.variables)
    feats = np.zeros((len(variables), len(VAR_FEATURES)), dtype=np.float32)
    forced = {e.var for e in state.trail if e.forced}
    if isinstance(adapter, SatAdapter):
        occ = sat_occurrences(state, adapter)
        for v in variables:
            val = state.assignment.get(v)
            pos, neg = occ.get(v, (0, 0))
            feats[v] = (val is not None, 0 if val is None else (1 if val else -1), v in forced, pos, neg,
                        len(state.domains.get(v, ())))
    elif isinstance(adapter, ColoringAdapter):
        k = adapter.graph.num_colors
        for v in variables:
            val = state.assignment.get(v)
            open_nb = sum(1 for w in adapter.graph.neighbors[v] if w not in state.assignment)
            feats[v] = (val is not None, 0 if val is None else (val + 1) / k, v in forced, open_nb, 0,
                        len(state.domains.get(v, ())))
    else:
        for i, v in enumerate(variables):
            feats[i, 0] = v in state.assignment
            feats[i, 5] = len(state.domains.get(v, ()))
    glob = np.array([state.conflict is not None, len(state.assignment) / max(len(variables), 1)],
                    dtype=np.float32)
    return feats, glob


@dataclass
class Pair:
    var_feats: np.ndarray
    glob: np.ndarray
    selectable: list
    backtrack: bool
    var: Optional[int] = None
    value_index: Optional[int] = None


def pairs_from_events(events, adapter) -> list:
    """(state, action) supervision pairs from one recorded episode."""
    out = []
    for ev in events:
        st = ev.state_before
        vf, g = state_features(st, adapter)
        if ev.action.kind == "backtrack":
            out.append(Pair(vf, g, adapter.selectable(st), True))
        else:
            vals = list(adapter.values_for(st.assignment, ev.action.var))
            out.append(Pair(vf, g, adapter.selectable(st), False, ev.action.var, vals.index(ev.action.value)))
    return out


class StateMLP(nn.Module):
    def __init__(self, max_values: int = 2, hidden: int = 64):
        super().__init__()
        d_in = len(VAR_FEATURES) + len(GLOBAL_FEATURES)
        self.body = nn.Sequential(nn.Linear(d_in, hidden), nn.ReLU(), nn.Linear(hidden, hidden), nn.ReLU())
        self.var_head = nn.Linear(hidden, 1)
        self.val_head = nn.Linear(hidden, max_values)
        self.bt_head = nn.Linear(2 * hidden + len(GLOBAL_FEATURES), 1)
        for head in (self.var_head, self.val_head, self.bt_head):
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    def forward(self, var_feats: torch.Tensor, glob: torch.Tensor):
        x = torch.cat([var_feats, glob.expand(var_feats.shape[0], -1)], dim=-1)
        h = self.body(x)
        pooled = torch.cat([h.mean(0), h.max(0).values, glob])
        return self.var_head(h).squeeze(-1), self.val_head(h), self.bt_head(pooled).squeeze(-1)


class MlpAgent:
    """Plugs a trained StateMLP into run_search as policy and verifier."""

    consults_conflicts = True

    def __init__(self, net: StateMLP, threshold: float = 0.5):
        self.net = net
        self.threshold = threshold

    def _out(self, state, adapter):
        vf, g = state_features(state, adapter)
        with torch.no_grad():
            return self.net(torch.from_numpy(vf), torch.from_numpy(g))

    def p_backtrack(self, state, adapter) -> float:
        return float(torch.sigmoid(self._out(state, adapter)[2]))

    def __call__(self, state, adapter) -> bool:
        return self.p_backtrack(state, adapter) > self.threshold

    def policy(self, state, adapter, rng=None) -> Action:
        var_logit, val_logit, _ = self._out(state, adapter)
        sel = adapter.selectable(state)
        v = sel[int(torch.argmax(var_logit[sel]))]
        vals = list(adapter.values_for(state.assignment, v))
        order = torch.argsort(val_logit[v][: len(vals)], descending=True, stable=True)
        for i in order.tolist():
            if vals[i] in state.domains[v]:
                return Action.branch(v, vals[i])
        return Action.branch(v, state.domains[v][0])


def _pair_loss(net, p: Pair):
    var_logit, val_logit, bt_logit = net(torch.from_numpy(p.var_feats), torch.from_numpy(p.glob))
    loss = F.binary_cross_entropy_with_logits(bt_logit, torch.tensor(float(p.backtrack)))
    if not p.backtrack:
        sel = torch.as_tensor(p.selectable)
        loss = loss + F.cross_entropy(var_logit[sel].unsqueeze(0), torch.tensor([p.selectable.index(p.var)]))
        loss = loss + F.cross_entropy(val_logit[p.var].unsqueeze(0), torch.tensor([p.value_index]))
    return loss


def pair_accuracy(net, pairs) -> float:
    hit = 0
    with torch.no_grad():
        for p in pairs:
            var_logit, val_logit, bt_logit = net(torch.from_numpy(p.var_feats), torch.from_numpy(p.glob))
            bt = bool(bt_logit > 0)
            if bt != p.backtrack:
                continue
            if p.backtrack:
                hit += 1
                continue
            v = p.selectable[int(torch.argmax(var_logit[p.selectable]))]
            hit += v == p.var and int(torch.argmax(val_logit[v])) == p.value_index
    return hit / max(len(pairs), 1)


def mlp_state_baseline(pairs: list, max_values: int = 2, epochs: int = 30, lr: float = 3e-3, seed: int = 0,
                       batch_size: int = 32) -> StateMLP:
    """Train the state-only predictor on (state, action) pairs."""
    if not pairs:
        raise InsufficientData("no training pairs")
    torch.manual_seed(seed)
    net = StateMLP(max_values)
    opt = torch.optim.AdamW(net.parameters(), lr=lr, weight_decay=0.01)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        for i in range(0, len(order), batch_size):
            loss = sum(_pair_loss(net, pairs[j]) for j in order[i:i + batch_size]) / len(order[i:i + batch_size])
            opt.zero_grad()
            loss.backward()
            opt.step()
    net.eval()
    return net
