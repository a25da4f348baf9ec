"""Token vocabularies.  Ids follow registration order, so a vocabulary built
from the same sizes is always identical."""
from __future__ import annotations

import json

from ..errors import InvalidParams, UnknownToken
from ..domains.peg import NONTERMINALS, TERMINALS

STRUCTURAL = (
    "[PAD]", "[BOS]", "[EOS]", "[CLAUSES]", "[GRAPH]", "[TREE]", "[INPUT]", "[SEARCH]",
    "[PROP]", "[/PROP]", "STATE", "SEP", ":", "?", "OK", "SOLVED", "FAILED", "CONFLICT", "BJ",
)


class Vocabulary:
    def __init__(self, tokens=()):
        self.tokens: list[str] = []
        self.index: dict[str, int] = {}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.index:
            self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return self.index[token]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise UnknownToken(token) from None

    def encode(self, tokens) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.tokens[int(i)] for i in ids]

    def to_json(self) -> str:
        return json.dumps({"tokens": self.tokens})

    @staticmethod
    def from_json(text: str) -> "Vocabulary":
        return Vocabulary(json.loads(text)["tokens"])


def mask_token(available, k: int) -> str:
    """Bit-mask of available colors, leftmost bit for the first color."""
    return "M" + "".join("1" if c in available else "0" for c in range(k))


def sat_vocab(num_vars: int, num_clauses: int, max_level: int | None = None) -> Vocabulary:
    v = Vocabulary(STRUCTURAL)
    for t in ("T", "F", "U", "SAT_OK", "UNIT"):
        v.add(t)
    for i in range(num_vars):
        v.add(f"v{i}")
    for i in range(num_vars):
        v.add(f"+v{i}")
        v.add(f"-v{i}")
    for j in range(num_clauses):
        v.add(f"C{j}")
    for l in range((max_level if max_level is not None else num_vars) + 1):
        v.add(f"L{l}")
    return v


def gc_vocab(num_nodes: int, num_colors: int) -> Vocabulary:
    import itertools
    v = Vocabulary(STRUCTURAL)
    for i in range(num_nodes):
        v.add(f"N{i}")
    for c in range(1, num_colors + 1):
        v.add(f"C{c}")
    for d in range(num_colors + 1):
        v.add(f"DS{d}")
    for bits in itertools.product("01", repeat=num_colors):
        v.add("M" + "".join(bits))
    for l in range(num_nodes + 1):
        v.add(f"L{l}")
    return v


def tree_vocab(id_pool: int) -> Vocabulary:
    v = Vocabulary(STRUCTURAL)
    for t in ("(", ")", "PAR", "VIS", "Q", "RET", "NONE"):
        v.add(t)
    for i in range(id_pool):
        v.add(f"N{i}")
    return v


def peg_vocab(max_len: int) -> Vocabulary:
    v = Vocabulary(STRUCTURAL)
    for t in TERMINALS:
        v.add(t)
    for nt in NONTERMINALS:
        v.add(f"<{nt}>")
    v.add("STK")
    v.add("SAT_OK")
    for c in range(max_len + 1):
        v.add(f"P{c}")
    n_choices = 3 * max_len + 4
    for d in range(n_choices):
        v.add(f"X{d}")
    for a in range(3):
        v.add(f"A{a}")
    for l in range(n_choices + 1):
        v.add(f"L{l}")
    return v


def build_vocabulary(domain: str, **sizes) -> Vocabulary:
    if domain == "sat":
        return sat_vocab(sizes["num_vars"], sizes["num_clauses"], sizes.get("max_level"))
    if domain == "gc":
        return gc_vocab(sizes["num_nodes"], sizes.get("num_colors", 4))
    if domain == "tree":
        return tree_vocab(sizes["id_pool"])
    if domain == "peg":
        return peg_vocab(sizes["max_len"])
    raise InvalidParams(f"unknown vocabulary domain {domain!r}")
