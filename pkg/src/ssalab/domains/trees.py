"""Rooted trees for the traversal and star-tree localization tasks."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InvalidParams


@dataclass(frozen=True)
class Tree:
    root: int
    children: dict  # node -> tuple of children in stored order

    def __post_init__(self):
        seen = {self.root}
        stack = [self.root]
        while stack:
            u = stack.pop()
            for c in self.children.get(u, ()):
                if c in seen:
                    raise InvalidParams(f"node {c} reached twice")
                seen.add(c)
                stack.append(c)
        extra = set(self.children) - seen
        if extra:
            raise InvalidParams(f"nodes unreachable from root: {sorted(extra)}")

    @property
    def nodes(self) -> list:
        return reference_traversal(self, "bfs")

    def kids(self, u) -> tuple:
        return tuple(self.children.get(u, ()))

    def parent_map(self) -> dict:
        return {c: u for u, cs in self.children.items() for c in cs}


def reference_traversal(tree: Tree, order: str = "dfs") -> list:
    """Visit order: DFS preorder (stored child order) or BFS level order."""
    if order == "dfs":
        out, stack = [], [tree.root]
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(reversed(tree.kids(u)))
        return out
    if order == "bfs":
        out, q = [], deque([tree.root])
        while q:
            u = q.popleft()
            out.append(u)
            q.extend(tree.kids(u))
        return out
    raise InvalidParams(f"unknown traversal order {order!r}")


def dfs_moves(tree: Tree) -> list:
    """DFS as (current node, move) pairs; a move is a child id or None (return)."""
    moves = []

    def visit(u):
        for c in tree.kids(u):
            moves.append((u, c))
            visit(c)
        moves.append((u, None))

    visit(tree.root)
    return moves


def _ids(rng, count, id_pool):
    if id_pool is None:
        return list(range(count))
    if id_pool < count:
        raise InvalidParams("id pool smaller than node count")
    return [int(x) for x in rng.choice(id_pool, size=count, replace=False)]


def random_tree(num_nodes: int = 20, branching=(2, 3, 4), rng=None, id_pool: Optional[int] = None) -> Tree:
    """Grow a tree breadth-first; each expanded node draws k from ``branching``."""
    if num_nodes < 1 or not branching or min(branching) < 1:
        raise InvalidParams("need num_nodes >= 1 and positive branching factors")
    rng = rng if rng is not None else np.random.default_rng()
    ids = _ids(rng, num_nodes, id_pool)
    children: dict = {}
    q = deque([0])
    count = 1
    while count < num_nodes:
        u = q.popleft()
        k = int(rng.choice(branching))
        k = min(k, num_nodes - count)
        kids = list(range(count, count + k))
        children[u] = kids
        q.extend(kids)
        count += k
    return Tree(ids[0], {ids[u]: tuple(ids[c] for c in cs) for u, cs in children.items()})


def star_tree(k: int, rng=None, id_pool: Optional[int] = None) -> Tree:
    """Root with k leaf children, stored in random order when ids are pooled."""
    if k < 1:
        raise InvalidParams("star tree needs k >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    ids = _ids(rng, k + 1, id_pool)
    return Tree(ids[0], {ids[0]: tuple(ids[1:])})


def chain_tree(length: int) -> Tree:
    return Tree(0, {i: (i + 1,) for i in range(length - 1)})
