"""Graph alteration operations and the consecutive random augmentation sampler."""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AugmentationExhausted, InvalidArgument, NotApplicable
from .graph import LabeledGraph, _edge, canonicalize, components, connected, find_cliques

log = logging.getLogger(__name__)


class OpKind(str, enum.Enum):
    EDGE_DELETION = "EdgeDeletion"
    NODE_DELETION = "NodeDeletion"
    EDGE_INSERTION = "EdgeInsertion"
    NODE_INSERTION = "NodeInsertion"
    NO_OP = "NoOp"

    @classmethod
    def parse(cls, text: str) -> "OpKind":
        key = text.strip().replace("-", "").replace("_", "").lower()
        for k in cls:
            if k.value.lower() == key or k.name.replace("_", "").lower() == key:
                return k
        raise InvalidArgument(f"unknown alteration kind {text!r}")


ALTERATIONS = (OpKind.EDGE_DELETION, OpKind.NODE_DELETION,
               OpKind.EDGE_INSERTION, OpKind.NODE_INSERTION)


@dataclass(frozen=True)
class AlterationOp:
    kind: OpKind
    args: tuple[int, ...] = ()

    def __str__(self):
        return f"{self.kind.value}({','.join(map(str, self.args))})"


@dataclass(frozen=True)
class AugmentConfig:
    num_steps: int = 1
    rng_seed: int = 0
    op_whitelist: tuple[OpKind, ...] = ALTERATIONS

    def __post_init__(self):
        if self.num_steps < 1:
            raise InvalidArgument("num_steps must be >= 1")
        wl = tuple(OpKind.parse(k) if isinstance(k, str) else OpKind(k)
                   for k in self.op_whitelist)
        if not wl or any(k not in ALTERATIONS for k in wl):
            raise InvalidArgument(f"bad op whitelist {self.op_whitelist!r}")
        object.__setattr__(self, "op_whitelist", wl)


@dataclass(frozen=True)
class AugmentedGraph:
    graph: LabeledGraph
    origin_id: int
    trace: tuple[AlterationOp, ...] = field(default=())

    @property
    def exhausted(self) -> bool:
        return any(op.kind is OpKind.NO_OP for op in self.trace)


# the four operations


def edge_deletion(g: LabeledGraph, edge: Sequence[int]) -> LabeledGraph:
    u, v = edge
    e = _edge(int(u), int(v))
    if e not in g.edges:
        raise InvalidArgument(f"edge {e} is not in graph {g.graph_id}")
    return g.replace(edges=g.edges - {e})


def node_deletion(g: LabeledGraph, u: int) -> LabeledGraph:
    if u not in g.index:
        raise InvalidArgument(f"node {u} is not in graph {g.graph_id}")
    if g.num_nodes < 2:
        raise NotApplicable("cannot delete the last node of a graph")
    keep = [i for i, w in enumerate(g.nodes) if w != u]
    out = LabeledGraph(
        nodes=tuple(g.nodes[i] for i in keep),
        edges=frozenset(e for e in g.edges if u not in e),
        features=g.features[keep],
        label=g.label,
        graph_id=g.graph_id,
    )
    return canonicalize(out)


def edge_insertion(g: LabeledGraph, u: int, v: int) -> LabeledGraph:
    e = _edge(int(u), int(v))
    if e in g.edges:
        raise NotApplicable(f"nodes {u} and {v} are already adjacent")
    if not connected(g, u, v):
        raise NotApplicable(f"no path joins nodes {u} and {v}")
    return g.replace(edges=g.edges | {e})


def node_insertion(g: LabeledGraph, clique: Iterable[int]) -> LabeledGraph:
    """Replace the edges inside ``clique`` by a new hub node joined to each member.

    The hub gets the next free id and the mean feature vector of the members.
    """
    members = sorted(set(int(x) for x in clique))
    if len(members) < 2:
        raise InvalidArgument("node insertion needs a clique of at least 2 nodes")
    for w in members:
        if w not in g.index:
            raise InvalidArgument(f"node {w} is not in graph {g.graph_id}")
    inner = {_edge(a, b) for a, b in combinations(members, 2)}
    if not inner <= g.edges:
        raise InvalidArgument(f"{members} is not a clique")
    hub = max(g.nodes) + 1
    feat = g.features[[g.index[w] for w in members]].mean(axis=0)
    return LabeledGraph(
        nodes=g.nodes + (hub,),
        edges=(g.edges - inner) | {(w, hub) for w in members},
        features=np.vstack([g.features, feat]),
        label=g.label,
        graph_id=g.graph_id,
    )


def apply_op(g: LabeledGraph, op: AlterationOp) -> LabeledGraph:
    if op.kind is OpKind.EDGE_DELETION:
        return edge_deletion(g, op.args)
    if op.kind is OpKind.NODE_DELETION:
        return node_deletion(g, op.args[0])
    if op.kind is OpKind.EDGE_INSERTION:
        return edge_insertion(g, *op.args)
    if op.kind is OpKind.NODE_INSERTION:
        return node_insertion(g, op.args)
    return g


def replay(g: LabeledGraph, trace: Iterable[AlterationOp]) -> LabeledGraph:
    for op in trace:
        g = apply_op(g, op)
    return g


# operand enumeration


def insertion_candidates(g: LabeledGraph) -> list[tuple[int, int]]:
    """Non-adjacent pairs ``(u, v)``, ``u < v``, that share a component."""
    n = g.num_nodes
    if n < 3:
        return []
    comp = np.empty(n, dtype=np.int64)
    for c, members in enumerate(components(g)):
        comp[[g.index[w] for w in members]] = c
    a = g.adjacency()
    ids = np.asarray(g.nodes)
    order = np.argsort(ids)
    mask = (comp[:, None] == comp[None, :]) & (a == 0)
    mask = mask[np.ix_(order, order)]
    pairs = np.argwhere(np.triu(mask, k=1))
    sorted_ids = ids[order]
    return [(int(sorted_ids[i]), int(sorted_ids[j])) for i, j in pairs]


def _has_insertion_candidate(g: LabeledGraph) -> bool:
    edge_count: dict[int, int] = {}
    comps = components(g)
    where = {}
    for c, members in enumerate(comps):
        for w in members:
            where[w] = c
    for u, _ in g.edges:
        edge_count[where[u]] = edge_count.get(where[u], 0) + 1
    return any(len(m) * (len(m) - 1) // 2 > edge_count.get(c, 0) for c, m in enumerate(comps))


def is_applicable(g: LabeledGraph, kind: OpKind) -> bool:
    if kind is OpKind.EDGE_DELETION or kind is OpKind.NODE_INSERTION:
        return g.num_edges >= 1
    if kind is OpKind.NODE_DELETION:
        return g.num_nodes >= 2
    if kind is OpKind.EDGE_INSERTION:
        return _has_insertion_candidate(g)
    return False


def node_insertion_candidates(g: LabeledGraph) -> list[frozenset[int]]:
    """Triangles when any exist, otherwise single edges."""
    tri = find_cliques(g, 3)
    if tri:
        return tri
    return [frozenset(e) for e in g.sorted_edges]


def candidates(g: LabeledGraph, kind: OpKind) -> list[AlterationOp]:
    if kind is OpKind.EDGE_DELETION:
        return [AlterationOp(kind, e) for e in g.sorted_edges]
    if kind is OpKind.NODE_DELETION:
        return [AlterationOp(kind, (u,)) for u in sorted(g.nodes)] if g.num_nodes >= 2 else []
    if kind is OpKind.EDGE_INSERTION:
        return [AlterationOp(kind, p) for p in insertion_candidates(g)]
    if kind is OpKind.NODE_INSERTION:
        return [AlterationOp(kind, tuple(sorted(s))) for s in node_insertion_candidates(g)]
    return []


# sampling


def sample_op(g: LabeledGraph, whitelist: Sequence[OpKind],
              rng: np.random.Generator) -> AlterationOp:
    """Pick an applicable kind uniformly, then one of its operands uniformly."""
    kinds = [k for k in ALTERATIONS if k in whitelist and is_applicable(g, k)]
    if not kinds:
        raise AugmentationExhausted(f"no whitelisted operation applies to graph {g.graph_id}")
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind is OpKind.EDGE_DELETION:
        edges = g.sorted_edges
        return AlterationOp(kind, edges[int(rng.integers(len(edges)))])
    if kind is OpKind.NODE_DELETION:
        nodes = sorted(g.nodes)
        return AlterationOp(kind, (nodes[int(rng.integers(len(nodes)))],))
    options = candidates(g, kind)
    return options[int(rng.integers(len(options)))]


_exhausted_count = 0


def exhausted_count() -> int:
    """How many sampled sequences were padded with no-ops in this process."""
    return _exhausted_count


def sample_augmentation(g: LabeledGraph, cfg: AugmentConfig,
                        rng: np.random.Generator, strict: bool = False) -> AugmentedGraph:
    """Apply ``cfg.num_steps`` randomly sampled operations consecutively.

    If nothing in the whitelist applies mid-sequence the remaining steps are
    recorded as no-ops, unless ``strict`` is set.
    """
    global _exhausted_count
    if g.num_nodes == 0:
        raise InvalidArgument("cannot augment an empty graph")
    cur = g
    trace: list[AlterationOp] = []
    for step in range(cfg.num_steps):
        try:
            op = sample_op(cur, cfg.op_whitelist, rng)
        except AugmentationExhausted:
            if strict:
                raise
            _exhausted_count += 1
            log.debug("graph %d exhausted at step %d; padding with no-ops", g.graph_id, step)
            trace.extend([AlterationOp(OpKind.NO_OP)] * (cfg.num_steps - step))
            break
        cur = apply_op(cur, op)
        trace.append(op)
    return AugmentedGraph(cur, g.graph_id, tuple(trace))


def graph_rng(seed: int, graph_id: int, epoch: int, stream: int = 0) -> np.random.Generator:
    """Independent reproducible stream per (seed, graph, epoch, view)."""
    return np.random.default_rng([seed, epoch, graph_id, stream])


# trace text format: one ``Kind(a,b,...)`` per line

_LINE = re.compile(r"^\s*(\w+)\(([-\d,\s]*)\)\s*$")


def format_trace(trace: Iterable[AlterationOp]) -> str:
    return "".join(f"{op}\n" for op in trace)


def parse_trace(text: str) -> list[AlterationOp]:
    ops = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        m = _LINE.match(line)
        if not m:
            raise InvalidArgument(f"line {lineno}: cannot parse {line!r}")
        args = tuple(int(x) for x in m.group(2).split(",") if x.strip())
        ops.append(AlterationOp(OpKind.parse(m.group(1)), args))
    return ops
