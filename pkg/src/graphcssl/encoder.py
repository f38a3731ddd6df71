"""Hierarchical graph encoder: GCN convolution, top-k pooling on neighbour
reconstruction error, similarity-based structure refinement and a mean/max
readout, plus the MLP classification head.

Parameters live in a flat ``name -> ndarray`` mapping.  Forward functions take
the same mapping wrapped as :class:`~graphcssl.autodiff.Tensor` leaves (see
:func:`graphcssl.autodiff.leaves`), or as plain arrays for no-grad passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidArgument, ShapeError
from .graph import LabeledGraph

ParamLike = Union[Tensor, np.ndarray]


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 3
    hidden_dim: int = 128
    pooling_ratio: float = 0.5
    dropout: float = 0.0
    similarity_threshold: float = 0.95

    def __post_init__(self):
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise InvalidArgument("num_layers and hidden_dim must be positive")
        if not 0.1 <= self.pooling_ratio <= 0.9:
            raise InvalidArgument(f"pooling_ratio {self.pooling_ratio} outside [0.1, 0.9]")
        if not 0.0 <= self.dropout <= 0.5:
            raise InvalidArgument(f"dropout {self.dropout} outside [0.0, 0.5]")

    @property
    def embedding_dim(self) -> int:
        return 2 * self.hidden_dim


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder(feature_dim: int, num_classes: int, cfg: EncoderConfig,
                 rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fresh encoder (``enc/``) and classification head (``head/cls/``) weights."""
    h = cfg.hidden_dim
    params: dict[str, np.ndarray] = {}
    d = feature_dim
    for i in range(cfg.num_layers):
        params[f"enc/layer{i}/W"] = glorot(rng, d, h)
        params[f"enc/layer{i}/b"] = np.zeros(h)
        d = h
    params.update(init_head(cfg.embedding_dim, h, num_classes, rng))
    return params


def init_head(in_dim: int, hidden: int, num_classes: int,
              rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {
        "head/cls/0/W": glorot(rng, in_dim, hidden),
        "head/cls/0/b": np.zeros(hidden),
        "head/cls/1/W": glorot(rng, hidden, num_classes),
        "head/cls/1/b": np.zeros(num_classes),
    }


def encoder_params(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v for k, v in params.items() if k.startswith("enc/")}


def head_params(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v for k, v in params.items() if k.startswith("head/cls/")}


def normalized_adjacency(a: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    a_hat = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * d[:, None] * d[None, :]


def gcn_layer(h, a: np.ndarray, w, b=None) -> Tensor:
    h, w = ad.as_tensor(h), ad.as_tensor(w)
    n = h.shape[0]
    if a.shape != (n, n):
        raise ShapeError(f"gcn_layer: adjacency {a.shape} for {n} nodes")
    if h.shape[1] != w.shape[0]:
        raise ShapeError(f"gcn_layer: features {h.shape} vs weight {w.shape}")
    out = ad.matmul(normalized_adjacency(a), ad.matmul(h, w))
    if b is not None:
        out = out + b
    return ad.relu(out)


def node_information_score(h: np.ndarray, a: np.ndarray) -> np.ndarray:
    """L1 distance between each node and the mean of its neighbours.

    Isolated nodes have nothing to reconstruct from, so they score ``|h|_1``.
    """
    deg = a.sum(axis=1)
    recon = np.zeros_like(h)
    has = deg > 0
    recon[has] = (a[has] @ h) / deg[has, None]
    return np.abs(h - recon).sum(axis=1)


def pool_size(n: int, ratio: float) -> int:
    return max(1, math.ceil(round(ratio * n, 9)))


def pool(h, a: np.ndarray, scores: np.ndarray, ratio: float):
    """Keep the ``ceil(ratio*n)`` best-scoring nodes (ties -> lower index).

    Returns the induced features, induced adjacency and the kept positions in
    ascending order.
    """
    if not 0.0 < ratio <= 1.0:
        raise InvalidArgument(f"pooling ratio {ratio} outside (0, 1]")
    n = len(scores)
    k = pool_size(n, ratio)
    order = np.lexsort((np.arange(n), -np.asarray(scores)))
    kept = np.sort(order[:k])
    return ad.gather_rows(h, kept), a[np.ix_(kept, kept)], kept


def cosine_matrix(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = np.where(norms[:, None] > 0, x / safe[:, None], 0.0)
    return unit @ unit.T


def structure_learning(h: np.ndarray, a: np.ndarray, threshold: float) -> np.ndarray:
    """Add an edge between every node pair whose cosine similarity reaches ``threshold``."""
    sim = cosine_matrix(h)
    out = np.maximum(a, (sim >= threshold).astype(np.float64))
    np.fill_diagonal(out, 0.0)
    return out


def readout(layers: Sequence) -> Tensor:
    """Sum over layers of the column-wise mean concatenated with the column-wise max."""
    total = None
    for h in layers:
        h = ad.as_tensor(h)
        if h.shape[0] == 0:
            raise InvalidArgument("readout of an empty node set")
        r = ad.concat([ad.mean(h, axis=0), ad.max(h, axis=0)], axis=0)
        total = r if total is None else total + r
    return total


def encode(g: LabeledGraph, params: Mapping[str, ParamLike], cfg: EncoderConfig,
           train: bool = False, rng: Optional[np.random.Generator] = None,
           prefix: str = "enc") -> Tensor:
    """Graph embedding of length ``2 * hidden_dim``.

    Dropout after each convolution is only applied when ``train`` is set and
    an ``rng`` is given.
    """
    if g.num_nodes == 0:
        raise InvalidArgument("cannot encode an empty graph")
    w0 = params[f"{prefix}/layer0/W"]
    if g.feature_dim != w0.shape[0]:
        raise ShapeError(f"graph features have dim {g.feature_dim}, encoder expects {w0.shape[0]}")
    h: Tensor = Tensor(g.features)
    a = g.adjacency()
    outs = []
    for i in range(cfg.num_layers):
        h = gcn_layer(h, a, params[f"{prefix}/layer{i}/W"], params[f"{prefix}/layer{i}/b"])
        if train and cfg.dropout > 0:
            h = ad.dropout(h, cfg.dropout, rng)
        scores = node_information_score(h.data, a)
        h, a, _ = pool(h, a, scores, cfg.pooling_ratio)
        a = structure_learning(h.data, a, cfg.similarity_threshold)
        outs.append(h)
    return readout(outs)


def encode_batch(graphs: Sequence[LabeledGraph], params: Mapping[str, ParamLike],
                 cfg: EncoderConfig, train: bool = False,
                 rng: Optional[np.random.Generator] = None, prefix: str = "enc") -> Tensor:
    return ad.stack_rows([encode(g, params, cfg, train, rng, prefix) for g in graphs])


def classify(h, params: Mapping[str, ParamLike], dropout: float = 0.0,
             rng: Optional[np.random.Generator] = None) -> Tensor:
    """Class logits for one embedding (vector) or a batch (matrix)."""
    h = ad.as_tensor(h)
    single = h.ndim == 1
    if single:
        h = ad.reshape(h, (1, -1))
    w0 = params["head/cls/0/W"]
    if h.shape[1] != w0.shape[0]:
        raise ShapeError(f"classify: embedding {h.shape} vs head {w0.shape}")
    z = ad.relu(ad.matmul(h, w0) + params["head/cls/0/b"])
    if rng is not None and dropout > 0:
        z = ad.dropout(z, dropout, rng)
    logits = ad.matmul(z, params["head/cls/1/W"]) + params["head/cls/1/b"]
    return ad.reshape(logits, (-1,)) if single else logits
