"""Immutable undirected graphs with per-node features and structural queries."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

import numpy as np

from .errors import InvalidArgument

Edge = tuple[int, int]


def _edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True, eq=False)
class LabeledGraph:
    """An undirected simple graph.

    ``features[i]`` belongs to ``nodes[i]``.  Edges are stored once as
    ``(u, v)`` with ``u < v``; the constructor normalizes whatever order it is
    handed and rejects self-loops or dangling endpoints.
    """

    nodes: tuple[int, ...]
    edges: frozenset[Edge]
    features: np.ndarray = None
    label: Optional[int] = None
    graph_id: int = 0

    def __post_init__(self):
        nodes = tuple(int(u) for u in self.nodes)
        if len(set(nodes)) != len(nodes):
            raise InvalidArgument("duplicate node ids")
        node_set = set(nodes)
        edges = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise InvalidArgument(f"self-loop on node {u}")
            if u not in node_set or v not in node_set:
                raise InvalidArgument(f"edge ({u}, {v}) references an unknown node")
            edges.add(_edge(u, v))
        if self.features is None:
            feats = np.ones((len(nodes), 1))
        else:
            feats = np.array(self.features, dtype=np.float64)
            if feats.ndim == 1 and len(nodes) == 0:
                feats = feats.reshape(0, 0)
            if feats.ndim != 2 or feats.shape[0] != len(nodes):
                raise InvalidArgument(
                    f"features must be {len(nodes)} x d, got shape {feats.shape}"
                )
        feats.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset(edges))
        object.__setattr__(self, "features", feats)
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @cached_property
    def index(self) -> dict[int, int]:
        """Node id -> row position in ``features``."""
        return {u: i for i, u in enumerate(self.nodes)}

    @cached_property
    def adjacency_sets(self) -> dict[int, frozenset[int]]:
        adj: dict[int, set[int]] = {u: set() for u in self.nodes}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return {u: frozenset(s) for u, s in adj.items()}

    @cached_property
    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def degree(self, u: int) -> int:
        return len(neighbors(self, u))

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 matrix in ``nodes`` order (read-only, cached)."""
        return self._adjacency

    @cached_property
    def _adjacency(self) -> np.ndarray:
        n = self.num_nodes
        a = np.zeros((n, n))
        if self.edges:
            idx = self.index
            uv = np.array([(idx[u], idx[v]) for u, v in self.edges])
            a[uv[:, 0], uv[:, 1]] = 1.0
            a[uv[:, 1], uv[:, 0]] = 1.0
        a.setflags(write=False)
        return a

    def feature_of(self, u: int) -> np.ndarray:
        return self.features[self.index[u]]

    def replace(self, **changes) -> "LabeledGraph":
        kw = dict(nodes=self.nodes, edges=self.edges, features=self.features,
                  label=self.label, graph_id=self.graph_id)
        kw.update(changes)
        return LabeledGraph(**kw)

    def __eq__(self, other):
        if not isinstance(other, LabeledGraph):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.label == other.label
            and self.graph_id == other.graph_id
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None

    def __repr__(self):
        return (f"LabeledGraph(id={self.graph_id}, n={self.num_nodes}, "
                f"m={self.num_edges}, d={self.feature_dim}, label={self.label})")


def make_graph(num_nodes: int, edges: Iterable[Edge], features=None,
               label: Optional[int] = None, graph_id: int = 0) -> LabeledGraph:
    """Build a graph over the dense node ids ``0..num_nodes-1``."""
    return LabeledGraph(tuple(range(num_nodes)), frozenset(map(tuple, edges)),
                        features, label, graph_id)


def _require_node(g: LabeledGraph, u: int):
    if u not in g.index:
        raise InvalidArgument(f"node {u} is not in graph {g.graph_id}")


def neighbors(g: LabeledGraph, u: int) -> frozenset[int]:
    _require_node(g, u)
    return g.adjacency_sets[u]


def connected(g: LabeledGraph, u: int, v: int) -> bool:
    """True iff some path joins ``u`` and ``v``."""
    _require_node(g, u)
    _require_node(g, v)
    if u == v:
        raise InvalidArgument("connected() needs two distinct nodes")
    adj = g.adjacency_sets
    seen = {u}
    queue = deque([u])
    while queue:
        w = queue.popleft()
        for x in adj[w]:
            if x == v:
                return True
            if x not in seen:
                seen.add(x)
                queue.append(x)
    return False


def components(g: LabeledGraph) -> list[list[int]]:
    """Connected components as sorted node lists, ordered by smallest member."""
    adj = g.adjacency_sets
    seen: set[int] = set()
    out = []
    for s in sorted(g.nodes):
        if s in seen:
            continue
        comp = [s]
        seen.add(s)
        queue = deque([s])
        while queue:
            w = queue.popleft()
            for x in adj[w]:
                if x not in seen:
                    seen.add(x)
                    comp.append(x)
                    queue.append(x)
        out.append(sorted(comp))
    return out


def find_cliques(g: LabeledGraph, size: int) -> list[frozenset[int]]:
    """All node sets of exactly ``size`` nodes that induce a complete subgraph.

    Each clique is reported once, in lexicographic order of its sorted members.
    """
    if size < 2:
        raise InvalidArgument("clique size must be >= 2")
    adj = g.adjacency_sets
    out: list[frozenset[int]] = []

    def extend(clique: list[int], candidates: list[int]):
        if len(clique) == size:
            out.append(frozenset(clique))
            return
        for i, w in enumerate(candidates):
            nxt = [x for x in candidates[i + 1:] if x in adj[w]]
            if len(clique) + 1 + len(nxt) >= size:
                extend(clique + [w], nxt)

    for u in sorted(g.nodes):
        higher = sorted(x for x in adj[u] if x > u)
        if 1 + len(higher) >= size:
            extend([u], higher)
    return out


def canonicalize(g: LabeledGraph) -> LabeledGraph:
    """Renumber nodes to ``0..n-1`` keeping their relative order."""
    order = sorted(range(g.num_nodes), key=lambda i: g.nodes[i])
    remap = {g.nodes[i]: new for new, i in enumerate(order)}
    edges = frozenset(_edge(remap[u], remap[v]) for u, v in g.edges)
    feats = g.features[order] if g.num_nodes else g.features
    return LabeledGraph(tuple(range(g.num_nodes)), edges, feats, g.label, g.graph_id)


def is_canonical(g: LabeledGraph) -> bool:
    return g.nodes == tuple(range(g.num_nodes))
