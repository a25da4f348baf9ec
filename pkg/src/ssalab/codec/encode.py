"""Serialize search episodes into a problem prefix plus decision blocks.

Block anatomy (SAT, enriched)::

    STATE v0 T v1 F v2 U SEP [PROP] C2 : -v0 +v1 -v2 SEP -v0 F +v1 F -v2 U SEP SAT_OK [/PROP] v2 T OK

Everything up to and including ``[/PROP]`` (or the first ``SEP`` for
domains without a PROP section) describes the state; that prefix of the
block is the canonical state block.  The model emits the action tokens:
a variable and a value for a branch, or ``CONFLICT`` for a backtrack.
Infrastructure writes the rest (``OK``, the conflict source, ``BJ L_l``,
terminal markers).
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..domains.coloring import ColoringAdapter
from ..domains.peg import PegAdapter
from ..domains.sat import SatAdapter, lit_value
from ..errors import InvalidParams, MalformedTrace
from .vocab import mask_token

SAT_FORMATS = ("enriched", "stripped", "residual-cnf")
GC_FORMATS = ("enriched", "stripped")
PEG_FORMATS = ("enriched",)
TREE_FORMATS = ("simple", "mid", "verbose")
RESIDUAL_LIMIT = 25


@dataclass
class Trace:
    tokens: list
    prefix_len: int
    blocks: list  # [start, end) spans
    actions: list = field(default_factory=list)  # per block: absolute indices of model-emitted tokens
    domain: str = ""
    fmt: str = ""

    def block_tokens(self, t: int) -> list:
        s, e = self.blocks[t - 1]
        return self.tokens[s:e]

    @property
    def prefix(self) -> list:
        return self.tokens[: self.prefix_len]

    def state_end(self, t: int) -> int:
        """Absolute index where block t's state part ends (first action token)."""
        s, e = self.blocks[t - 1]
        return s + state_length(self.tokens[s:e])


def state_length(block: list) -> int:
    """Length of the canonical state part of a block."""
    if not block or block[0] != "STATE":
        raise MalformedTrace("block must start with STATE")
    if "[/PROP]" in block:
        return block.index("[/PROP]") + 1
    if "SEP" in block:
        return block.index("SEP") + 1
    raise MalformedTrace("block has no state terminator")


def _lit_token(lit: int) -> str:
    return f"+v{abs(lit) - 1}" if lit > 0 else f"-v{abs(lit) - 1}"


def _tv(val) -> str:
    return "U" if val is None else ("T" if val else "F")


class SatCodec:
    domain = "sat"
    formats = SAT_FORMATS

    def __init__(self, adapter: SatAdapter, fmt: str = "enriched"):
        if fmt not in SAT_FORMATS:
            raise InvalidParams(f"format {fmt!r} not valid for SAT")
        self.adapter = adapter
        self.cnf = adapter.cnf
        self.fmt = fmt

    def prefix(self) -> list:
        out = ["[BOS]", "[CLAUSES]"]
        for j, c in enumerate(self.cnf.clauses):
            out += [f"C{j}", ":"] + [_lit_token(l) for l in c] + ["SEP"]
        return out + ["[SEARCH]"]

    def state_tokens(self, state) -> list:
        a = state.assignment
        out = ["STATE"]
        if self.fmt == "residual-cnf":
            shown = 0
            for j, c in enumerate(self.cnf.clauses):
                if shown >= RESIDUAL_LIMIT:
                    break
                if any(lit_value(l, a) for l in c):
                    continue
                out += [f"C{j}", ":"] + [_lit_token(l) for l in c if lit_value(l, a) is None] + ["SEP"]
                shown += 1
            out.append("SEP")
        else:
            for v in range(self.cnf.num_vars):
                out += [f"v{v}", "?" if self.fmt == "stripped" else _tv(a.get(v))]
            out.append("SEP")
        ev = self.adapter.inspect(a, state.conflict)
        if ev is not None:
            c = self.cnf.clauses[ev.clause]
            out += ["[PROP]", f"C{ev.clause}", ":"] + [_lit_token(l) for l in c] + ["SEP"]
            for l in c:
                out += [_lit_token(l), "?" if self.fmt == "stripped" else _tv(lit_value(l, a))]
            out += ["SEP", ev.verdict, "[/PROP]"]
        return out

    def var_token(self, var) -> str:
        return f"v{var}"

    def value_token(self, value) -> str:
        return "T" if value else "F"

    def token_var(self, tok: str):
        return int(tok[1:]) if tok.startswith("v") and tok[1:].isdigit() else None

    def token_value(self, tok: str):
        return {"T": True, "F": False}.get(tok)

    def between_tokens(self, state, var) -> list:
        return []

    def conflict_tokens(self, state) -> list:
        return [] if state.conflict is None else [f"C{state.conflict}"]


class GcCodec:
    domain = "gc"
    formats = GC_FORMATS

    def __init__(self, adapter: ColoringAdapter, fmt: str = "enriched"):
        if fmt not in GC_FORMATS:
            raise InvalidParams(f"format {fmt!r} not valid for graph coloring")
        self.adapter = adapter
        self.graph = adapter.graph
        self.fmt = fmt

    def prefix(self) -> list:
        out = ["[BOS]", "[GRAPH]"]
        for u in range(self.graph.num_nodes):
            out += [f"N{u}", ":"] + [f"N{w}" for w in self.graph.neighbors[u]] + ["SEP"]
        return out + ["[SEARCH]"]

    def state_tokens(self, state) -> list:
        out = ["STATE"]
        for u in range(self.graph.num_nodes):
            if u in state.assignment:
                continue
            dom = state.domains[u]
            out += ["?" if self.fmt == "stripped" else f"DS{len(dom)}", f"N{u}"]
        return out + ["SEP"]

    def var_token(self, var) -> str:
        return f"N{var}"

    def value_token(self, value) -> str:
        return f"C{value + 1}"

    def token_var(self, tok: str):
        return int(tok[1:]) if tok.startswith("N") and tok[1:].isdigit() else None

    def token_value(self, tok: str):
        if tok.startswith("C") and tok[1:].isdigit():
            return int(tok[1:]) - 1
        return None

    def between_tokens(self, state, var) -> list:
        return [mask_token(state.domains.get(var, ()), self.graph.num_colors)]

    def conflict_tokens(self, state) -> list:
        return [] if state.conflict is None else [f"N{state.conflict}"]


class PegCodec:
    domain = "peg"
    formats = PEG_FORMATS

    def __init__(self, adapter: PegAdapter, fmt: str = "enriched"):
        if fmt not in PEG_FORMATS:
            raise InvalidParams(f"format {fmt!r} not valid for PEG")
        self.adapter = adapter
        self.fmt = fmt

    def prefix(self) -> list:
        return ["[BOS]", "[INPUT]", *self.adapter.tokens, "[SEARCH]"]

    def state_tokens(self, state) -> list:
        cfg = self.adapter.config(state.assignment)
        stack = [f"<{s}>" if s in self.adapter.grammar else s for s in reversed(cfg.stack)]
        verdict = "CONFLICT" if state.conflict is not None else "SAT_OK"
        return ["STATE", f"P{cfg.cursor}", "STK", *stack, "SEP", "[PROP]", verdict, "[/PROP]"]

    def var_token(self, var) -> str:
        return f"X{var}"

    def value_token(self, value) -> str:
        return f"A{value}"

    def token_var(self, tok: str):
        return int(tok[1:]) if tok.startswith("X") and tok[1:].isdigit() else None

    def token_value(self, tok: str):
        return int(tok[1:]) if tok.startswith("A") and tok[1:].isdigit() else None

    def between_tokens(self, state, var) -> list:
        return []

    def conflict_tokens(self, state) -> list:
        return [] if state.conflict is None else [f"P{state.conflict}"]


def make_codec(adapter, fmt: str = "enriched"):
    if isinstance(adapter, SatAdapter):
        return SatCodec(adapter, fmt)
    if isinstance(adapter, ColoringAdapter):
        return GcCodec(adapter, fmt)
    if isinstance(adapter, PegAdapter):
        return PegCodec(adapter, fmt)
    raise InvalidParams(f"no codec for {type(adapter).__name__}")


def action_tokens(codec, event) -> list:
    a = event.action
    if a.kind == "branch":
        return [codec.var_token(a.var), *codec.between_tokens(event.state_before, a.var), codec.value_token(a.value)]
    return ["CONFLICT"]


def outcome_tokens(codec, event) -> list:
    o = event.outcome
    if event.action.kind == "branch":
        return ["OK", "SOLVED", "[EOS]"] if o.kind == "solved" else ["OK"]
    src = codec.conflict_tokens(event.state_before)
    if o.kind == "failed":
        return src + ["FAILED", "[EOS]"]
    out = src + ["BJ", f"L{o.target - 1}"]
    if o.solved:
        out += ["SOLVED", "[EOS]"]
    return out


def emitted_offsets(codec, event) -> list:
    """Offsets (within the action tokens) of the tokens the model emits."""
    if event.action.kind == "branch":
        n_between = len(codec.between_tokens(event.state_before, event.action.var))
        return [0, 1 + n_between]
    return [0]


def encode_block(codec, event) -> tuple[list, list]:
    state = codec.state_tokens(event.state_before)
    act = action_tokens(codec, event)
    offsets = [len(state) + o for o in emitted_offsets(codec, event)]
    return state + act + outcome_tokens(codec, event), offsets


def encode_trace(events, codec, vocab=None, termination: str | None = None) -> Trace:
    """One block per event.  A timed-out episode ends with a bare [EOS]."""
    tokens = codec.prefix()
    plen = len(tokens)
    blocks, actions = [], []
    for ev in events:
        block, offsets = encode_block(codec, ev)
        start = len(tokens)
        tokens += block
        blocks.append((start, len(tokens)))
        actions.append([start + o for o in offsets])
    if termination == "timeout" and blocks and tokens[-1] != "[EOS]":
        tokens.append("[EOS]")
        blocks[-1] = (blocks[-1][0], len(tokens))
    if vocab is not None:
        vocab.encode(tokens)  # raises UnknownToken on symbols outside the vocabulary
    return Trace(tokens, plen, blocks, actions, codec.domain, codec.fmt)


def tree_prefix(tree, prefix_order: str = "stored") -> list:
    def rec(u):
        kids = tree.kids(u)
        if prefix_order == "sorted":
            kids = sorted(kids)
        out = ["(", f"N{u}"]
        for c in kids:
            out += rec(c)
        return out + [")"]

    return ["[BOS]", "[TREE]", *rec(tree.root), "[SEARCH]"]


def encode_tree_trace(tree, fmt: str = "simple", order: str = "dfs", prefix_order: str = "stored") -> Trace:
    """Traversal trace; each block is one move from the current node.

    DFS moves go to the next child or RET (return to parent).  mid adds the
    parent id, verbose also lists the children already visited (DFS) or the
    pending queue (BFS).
    """
    from collections import deque

    from ..domains.trees import dfs_moves, reference_traversal

    if fmt not in TREE_FORMATS:
        raise InvalidParams(f"format {fmt!r} not valid for trees")
    parent = tree.parent_map()
    tokens = tree_prefix(tree, prefix_order)
    plen = len(tokens)
    blocks, actions = [], []

    def head(u, extra):
        out = ["STATE", f"N{u}"]
        if fmt in ("mid", "verbose"):
            out += ["PAR", f"N{parent[u]}" if u in parent else "NONE"]
        if fmt == "verbose":
            out += extra
        return out + ["SEP"]

    if order == "dfs":
        visited: dict = {}
        for u, c in dfs_moves(tree):
            block = head(u, ["VIS", *[f"N{x}" for x in visited.get(u, [])]])
            block.append(f"N{c}" if c is not None else "RET")
            if c is not None:
                visited.setdefault(u, []).append(c)
            start = len(tokens)
            actions.append([start + len(block) - 1])
            tokens += block
            blocks.append((start, len(tokens)))
    elif order == "bfs":
        seq = reference_traversal(tree, "bfs")
        q = deque([tree.root])
        for i, u in enumerate(seq):
            q.popleft()
            q.extend(tree.kids(u))
            block = head(u, ["Q", *[f"N{x}" for x in q]])
            block.append(f"N{seq[i + 1]}" if i + 1 < len(seq) else "RET")
            start = len(tokens)
            actions.append([start + len(block) - 1])
            tokens += block
            blocks.append((start, len(tokens)))
    else:
        raise InvalidParams(f"unknown traversal order {order!r}")
    if blocks:
        tokens.append("[EOS]")
        blocks[-1] = (blocks[-1][0], len(tokens))
    return Trace(tokens, plen, blocks, actions, "tree", fmt)
