"""Reader for the TU Dortmund flat-text graph classification datasets.

Layout under ``<root>/<NAME>/``::

    NAME_A.txt                 "i, j" per line, 1-based global node ids
    NAME_graph_indicator.txt   line i holds the 1-based graph id of node i
    NAME_graph_labels.txt      line g holds the class of graph g
    NAME_node_labels.txt       optional, line i holds the label of node i
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataNotFound, FormatError, InvalidArgument
from .graph import LabeledGraph

log = logging.getLogger(__name__)

DEFAULT_MAX_DEGREE = 10


@dataclass(frozen=True)
class Dataset:
    name: str
    graphs: tuple[LabeledGraph, ...]
    num_classes: int
    feature_dim: int

    def __len__(self):
        return len(self.graphs)

    def by_id(self, graph_id: int) -> LabeledGraph:
        return self._lookup[graph_id]

    @property
    def _lookup(self) -> dict[int, LabeledGraph]:
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {g.graph_id: g for g in self.graphs}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache

    def select(self, graph_ids: Sequence[int]) -> list[LabeledGraph]:
        return [self.by_id(i) for i in graph_ids]

    def subset(self, graph_ids: Sequence[int], name: Optional[str] = None) -> "Dataset":
        return Dataset(name or self.name, tuple(self.select(graph_ids)),
                       self.num_classes, self.feature_dim)


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    train_ids: tuple[int, ...]
    val_ids: tuple[int, ...]
    test_ids: tuple[int, ...]

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train_ids), len(self.val_ids), len(self.test_ids)


def _read_ints(path: Path, width: int) -> list[tuple[int, ...]]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = [p for p in line.replace(",", " ").split() if p]
            if len(parts) < width:
                raise FormatError(f"expected {width} integer(s), got {line!r}", path, lineno)
            try:
                rows.append(tuple(int(float(p)) for p in parts[:width]) + (lineno,))
            except ValueError:
                raise FormatError(f"non-integer value in {line!r}", path, lineno) from None
    return rows


def _one_hot(values: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((len(values), width))
    out[np.arange(len(values)), values] = 1.0
    return out


def load_tu(root, name: str, max_degree: int = DEFAULT_MAX_DEGREE,
            features: str = "auto") -> Dataset:
    """Load ``<root>/<name>`` into canonical graphs with one-hot node features.

    With ``features="auto"`` node labels become one-hot features and datasets
    without node labels get a one-hot degree encoding capped at
    ``max_degree``.  ``features="degree"`` forces the degree encoding, which
    gives every dataset the same input width.  Raw graph labels are
    remapped to ``0..C-1`` in sorted order.  Self-loops and the reverse copy
    of each undirected edge are dropped.
    """
    base = Path(root) / name
    prefix = base / name
    a_path = Path(f"{prefix}_A.txt")
    ind_path = Path(f"{prefix}_graph_indicator.txt")
    lab_path = Path(f"{prefix}_graph_labels.txt")
    node_lab_path = Path(f"{prefix}_node_labels.txt")
    for p in (a_path, ind_path, lab_path):
        if not p.is_file():
            raise DataNotFound(f"missing TU file {p}")

    indicator = _read_ints(ind_path, 1)
    graph_labels = _read_ints(lab_path, 1)
    num_graphs = len(graph_labels)
    node_graph = np.empty(len(indicator), dtype=np.int64)
    for i, (gid, lineno) in enumerate(indicator):
        if not 1 <= gid <= num_graphs:
            raise FormatError(f"graph id {gid} outside 1..{num_graphs}", ind_path, lineno)
        node_graph[i] = gid - 1

    members: list[list[int]] = [[] for _ in range(num_graphs)]
    for node, gid in enumerate(node_graph):
        members[gid].append(node)
    local = np.empty(len(indicator), dtype=np.int64)
    for nodes in members:
        local[nodes] = np.arange(len(nodes))

    edge_sets: list[set[tuple[int, int]]] = [set() for _ in range(num_graphs)]
    n_total = len(indicator)
    self_loops = 0
    for u, v, lineno in _read_ints(a_path, 2):
        if not (1 <= u <= n_total and 1 <= v <= n_total):
            raise FormatError(f"node id outside 1..{n_total} in edge ({u}, {v})", a_path, lineno)
        u, v = u - 1, v - 1
        gu, gv = node_graph[u], node_graph[v]
        if gu != gv:
            raise FormatError(f"edge ({u + 1}, {v + 1}) joins graphs {gu + 1} and {gv + 1}",
                              a_path, lineno)
        if u == v:
            self_loops += 1
            continue
        a, b = int(local[u]), int(local[v])
        edge_sets[gu].add((a, b) if a < b else (b, a))
    if self_loops:
        log.info("%s: dropped %d self-loop entries", name, self_loops)

    if features not in ("auto", "degree"):
        raise InvalidArgument(f"features must be 'auto' or 'degree', not {features!r}")
    if features == "auto" and node_lab_path.is_file():
        raw = _read_ints(node_lab_path, 1)
        if len(raw) != n_total:
            raise FormatError(f"{len(raw)} node labels for {n_total} nodes", node_lab_path)
        vals = np.array([r[0] for r in raw])
        uniq, codes = np.unique(vals, return_inverse=True)
        all_feats = _one_hot(codes, len(uniq))
    else:
        deg = np.zeros(n_total, dtype=np.int64)
        for gid, es in enumerate(edge_sets):
            base_ids = np.asarray(members[gid])
            for a, b in es:
                deg[base_ids[a]] += 1
                deg[base_ids[b]] += 1
        all_feats = _one_hot(np.minimum(deg, max_degree), max_degree + 1)

    raw_labels = np.array([r[0] for r in graph_labels])
    classes, label_codes = np.unique(raw_labels, return_inverse=True)

    graphs = []
    for gid in range(num_graphs):
        nodes = members[gid]
        graphs.append(LabeledGraph(
            nodes=tuple(range(len(nodes))),
            edges=frozenset(edge_sets[gid]),
            features=all_feats[nodes],
            label=int(label_codes[gid]),
            graph_id=gid,
        ))
    return Dataset(name, tuple(graphs), len(classes), all_feats.shape[1])


def write_tu(root, name: str, graphs: Sequence[LabeledGraph],
             node_labels: Optional[Sequence[Sequence[int]]] = None) -> Path:
    """Write graphs in TU layout; the inverse of ``load_tu`` up to featurization."""
    base = Path(root) / name
    base.mkdir(parents=True, exist_ok=True)
    offset = 0
    a_lines, ind_lines, lab_lines, nl_lines = [], [], [], []
    for gi, g in enumerate(graphs):
        pos = g.index
        for u, v in g.sorted_edges:
            a, b = pos[u] + offset + 1, pos[v] + offset + 1
            a_lines.append(f"{a}, {b}")
            a_lines.append(f"{b}, {a}")
        ind_lines.extend([str(gi + 1)] * g.num_nodes)
        lab_lines.append(str(g.label if g.label is not None else 0))
        if node_labels is not None:
            nl_lines.extend(str(int(x)) for x in node_labels[gi])
        offset += g.num_nodes
    (base / f"{name}_A.txt").write_text("\n".join(a_lines) + "\n")
    (base / f"{name}_graph_indicator.txt").write_text("\n".join(ind_lines) + "\n")
    (base / f"{name}_graph_labels.txt").write_text("\n".join(lab_lines) + "\n")
    if node_labels is not None:
        (base / f"{name}_node_labels.txt").write_text("\n".join(nl_lines) + "\n")
    return base


def make_splits(ds: Dataset, seed: int) -> SplitPlan:
    """Shuffle graph ids under ``seed``; floor(80%) train, floor(10%) val, rest test."""
    n = len(ds)
    if n == 0:
        raise InvalidArgument("cannot split an empty dataset")
    ids = np.array([g.graph_id for g in ds.graphs])
    perm = ids[np.random.default_rng(seed).permutation(n)]
    n_train = n * 8 // 10
    n_val = n // 10
    return SplitPlan(
        seed=seed,
        train_ids=tuple(int(i) for i in perm[:n_train]),
        val_ids=tuple(int(i) for i in perm[n_train:n_train + n_val]),
        test_ids=tuple(int(i) for i in perm[n_train + n_val:]),
    )


def dataset_stats(ds: Dataset) -> dict:
    n = len(ds)
    return {
        "name": ds.name,
        "num_classes": ds.num_classes,
        "num_graphs": n,
        "feature_dim": ds.feature_dim,
        "avg_nodes": sum(g.num_nodes for g in ds.graphs) / n if n else 0.0,
        "avg_edges": sum(g.num_edges for g in ds.graphs) / n if n else 0.0,
    }


def data_root(default=None) -> Optional[Path]:
    root = os.environ.get("GRAPHCSSL_DATA_ROOT", default)
    return Path(root) if root else None
