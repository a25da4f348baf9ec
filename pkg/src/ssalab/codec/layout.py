"""Block boundaries, state rebuilding and data-level history reductions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import IndexOutOfRange, InvalidParams, MalformedTrace
from .encode import Trace, state_length


@dataclass
class Layout:
    """Region spans over a token sequence.  Slots (if any) come first."""
    length: int
    slots: tuple = (0, 0)
    prefix: tuple = (0, 0)
    blocks: list = field(default_factory=list)

    def with_slots(self, r: int) -> "Layout":
        sh = lambda sp: (sp[0] + r, sp[1] + r)
        return Layout(self.length + r, (0, r), sh(self.prefix), [sh(b) for b in self.blocks])

    def validate(self) -> None:
        from ..errors import InvalidLayout
        spans = [self.slots, self.prefix, *self.blocks]
        pos = 0
        for s, e in spans:
            if s != pos or e < s:
                raise InvalidLayout(f"span ({s}, {e}) does not continue at {pos}")
            pos = e
        if pos != self.length:
            raise InvalidLayout(f"spans cover {pos} of {self.length} tokens")


def layout_of(trace: Trace) -> Layout:
    return Layout(len(trace.tokens), (0, 0), (0, trace.prefix_len), [tuple(b) for b in trace.blocks])


def parse_layout(tokens) -> Layout:
    """Prefix runs through [SEARCH]; every STATE token opens a block."""
    tokens = list(tokens)
    if "[SEARCH]" not in tokens:
        raise MalformedTrace("no [SEARCH] marker")
    plen = tokens.index("[SEARCH]") + 1
    starts = [i for i in range(plen, len(tokens)) if tokens[i] == "STATE"]
    if plen < len(tokens) and (not starts or starts[0] != plen):
        raise MalformedTrace("tokens after [SEARCH] do not start with STATE")
    ends = starts[1:] + [len(tokens)]
    return Layout(len(tokens), (0, 0), (0, plen), list(zip(starts, ends)))


def split_trace(tokens) -> tuple[list, list]:
    """Decode a token list into (prefix tokens, list of block token lists)."""
    lay = parse_layout(tokens)
    tokens = list(tokens)
    return tokens[: lay.prefix[1]], [tokens[s:e] for s, e in lay.blocks]


def assemble(prefix, blocks) -> Trace:
    tokens = list(prefix)
    spans = []
    for b in blocks:
        state_length(b)
        spans.append((len(tokens), len(tokens) + len(b)))
        tokens += list(b)
    return Trace(tokens, len(prefix), spans)


def trace_from_tokens(tokens, domain: str = "", fmt: str = "") -> Trace:
    prefix, blocks = split_trace(tokens)
    tr = assemble(prefix, blocks)
    tr.domain, tr.fmt = domain, fmt
    return tr


def state_rebuild(trace: Trace, t: int) -> Trace:
    """Prefix plus the state part of block t (1-indexed); history discarded."""
    if not 1 <= t <= len(trace.blocks):
        raise IndexOutOfRange(f"block {t} of {len(trace.blocks)}")
    s, e = trace.blocks[t - 1]
    block = trace.tokens[s:e]
    state = block[: state_length(block)]
    out = Trace(trace.prefix + state, trace.prefix_len, [(trace.prefix_len, trace.prefix_len + len(state))],
                [[]], trace.domain, trace.fmt)
    return out


def apply_history_reduction(trace: Trace, mode: str, rng=None, t: int | None = None, p: float = 0.5,
                            k: int = 3) -> Trace:
    """History seen at step t: dropout(p), window(k) or null.

    Returns prefix + retained prior blocks + the full block t.
    """
    if mode == "dropout" and not 0 <= p <= 1:
        raise InvalidParams("dropout probability must lie in [0, 1]")
    if mode == "window" and k < 0:
        raise InvalidParams("window size must be non-negative")
    n = len(trace.blocks)
    t = n if t is None else t
    if not 1 <= t <= n:
        raise IndexOutOfRange(f"block {t} of {n}")
    prior = list(range(1, t))
    if mode == "dropout":
        rng = rng if rng is not None else np.random.default_rng()
        keep = [i for i in prior if rng.random() >= p] if p > 0 else prior
    elif mode == "window":
        keep = prior[len(prior) - k:] if k > 0 else []
    elif mode == "null":
        keep = []
    elif mode == "none":
        keep = prior
    else:
        raise InvalidParams(f"unknown history reduction {mode!r}")
    blocks = [trace.block_tokens(i) for i in keep + [t]]
    out = assemble(trace.prefix, blocks)
    out.domain, out.fmt = trace.domain, trace.fmt
    # carry the model-emitted positions of block t
    if trace.actions:
        shift = out.blocks[-1][0] - trace.blocks[t - 1][0]
        out.actions = [[] for _ in keep] + [[i + shift for i in trace.actions[t - 1]]]
    return out


def reduced_examples(trace: Trace, mode: str, rng=None, **kw) -> list:
    """One training sequence per block under a history reduction."""
    if mode == "none":
        return [trace]
    return [apply_history_reduction(trace, mode, rng, t, **kw) for t in range(1, len(trace.blocks) + 1)]
