"""Projection head, temperature-scaled contrastive loss and the MoCo machinery
(key queue, momentum encoder) for graph-level contrastive learning."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .augment import AugmentConfig, graph_rng, sample_augmentation
from .autodiff import Tensor
from .encoder import EncoderConfig, encode, glorot
from .errors import InvalidArgument, ShapeError
from .graph import LabeledGraph

# view ids for independent random streams per graph and epoch
QUERY_VIEW, KEY_VIEW, WARMUP_VIEW, DROPOUT_VIEW = 0, 1, 2, 3

_MASKED = -1e30


@dataclass(frozen=True)
class CSSLConfig:
    queue_size: int = 1024
    momentum: float = 0.999
    temperature: float = 0.07
    proj_dim: int = 128
    proj_hidden: Optional[int] = None
    exclude_same_origin: bool = True
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.queue_size < 1:
            raise InvalidArgument("queue_size must be >= 1")
        if not 0.0 <= self.momentum <= 1.0:
            raise InvalidArgument("momentum must lie in [0, 1]")
        if self.temperature <= 0:
            raise InvalidArgument("temperature must be > 0")


def init_projection(in_dim: int, hidden: int, out_dim: int,
                    rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {
        "proj/0/W": glorot(rng, in_dim, hidden),
        "proj/0/b": np.zeros(hidden),
        "proj/1/W": glorot(rng, hidden, out_dim),
        "proj/1/b": np.zeros(out_dim),
    }


def project(h, params: Mapping, prefix: str = "proj") -> Tensor:
    z = ad.relu(ad.matmul(h, params[f"{prefix}/0/W"]) + params[f"{prefix}/0/b"])
    return ad.matmul(z, params[f"{prefix}/1/W"]) + params[f"{prefix}/1/b"]


def cosine_sim(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cosine_sim: shapes {a.shape} and {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def contrastive_loss(z_i, z_j, negatives, tau: float) -> Tensor:
    """-log of the softmax weight of the positive among positive + negatives.

    ``negatives`` is a sequence of vectors or a ``K x d`` matrix.  Inputs are
    compared by cosine similarity, so their scale does not matter.
    """
    if tau <= 0:
        raise InvalidArgument("temperature must be > 0")
    z_i, z_j = ad.as_tensor(z_i), ad.as_tensor(z_j)
    if isinstance(negatives, (Tensor, np.ndarray)):
        neg = ad.as_tensor(negatives)
        if neg.ndim == 1:
            neg = ad.reshape(neg, (1, -1))
    else:
        if len(negatives) == 0:
            raise InvalidArgument("contrastive loss needs at least one negative")
        neg = ad.stack_rows(negatives)
    if neg.shape[0] == 0:
        raise InvalidArgument("contrastive loss needs at least one negative")
    d = z_i.shape[-1]
    if z_j.shape[-1] != d or neg.shape[1] != d:
        raise ShapeError(f"contrastive_loss: dims {z_i.shape}, {z_j.shape}, {neg.shape}")
    q = ad.l2_normalize_rows(ad.reshape(z_i, (1, d)))
    k = ad.l2_normalize_rows(ad.reshape(z_j, (1, d)))
    n = ad.l2_normalize_rows(neg)
    pos = ad.sum(q * k, axis=1, keepdims=True)
    logits = ad.concat([pos, ad.matmul(q, ad.transpose(n))], axis=1) / tau
    return ad.neg(ad.sum(ad.gather_rows(ad.transpose(ad.log_softmax(logits, axis=1)), [0])))


def batched_contrastive_loss(q, k, queue_keys: np.ndarray, tau: float,
                             exclude: Optional[np.ndarray] = None) -> Tensor:
    """Mean per-query loss; row ``b`` uses ``k[b]`` as positive and the queue as negatives.

    ``q`` and ``k`` must already be unit rows.  ``exclude[b, j]`` removes queue
    entry ``j`` from query ``b``'s denominator.
    """
    q, k = ad.as_tensor(q), ad.as_tensor(k)
    if queue_keys.shape[0] == 0:
        raise InvalidArgument("contrastive loss needs at least one negative")
    pos = ad.sum(q * k, axis=1, keepdims=True)
    negs = ad.matmul(q, Tensor(queue_keys.T))
    logits = ad.concat([pos, negs], axis=1) / tau
    if exclude is not None and exclude.any():
        mask = np.zeros(logits.shape)
        mask[:, 1:][exclude] = _MASKED
        logits = logits + mask
    logp = ad.log_softmax(logits, axis=1)
    first = np.zeros(logits.shape)
    first[:, 0] = 1.0
    return ad.neg(ad.mean(ad.sum(logp * first, axis=1)))


class KeyQueue:
    """Fixed-capacity FIFO of unit key vectors tagged with their origin graph."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise InvalidArgument("queue capacity must be >= 1")
        self.capacity = capacity
        self.dim = dim
        self._keys = np.zeros((capacity, dim))
        self._origins = np.full(capacity, -1, dtype=np.int64)
        self._cursor = 0
        self._size = 0

    def __len__(self):
        return self._size

    @property
    def full(self) -> bool:
        return self._size == self.capacity

    def enqueue(self, keys: np.ndarray, origins: Sequence[int]) -> None:
        keys = np.atleast_2d(np.asarray(keys, dtype=np.float64))
        origins = np.asarray(origins, dtype=np.int64)
        if keys.shape[1] != self.dim or len(origins) != keys.shape[0]:
            raise ShapeError(f"enqueue: keys {keys.shape}, origins {origins.shape}, dim {self.dim}")
        if keys.shape[0] > self.capacity:
            keys, origins = keys[-self.capacity:], origins[-self.capacity:]
        for key, origin in zip(keys, origins):
            self._keys[self._cursor] = key
            self._origins[self._cursor] = origin
            self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self.capacity, self._size + keys.shape[0])

    def _order(self) -> np.ndarray:
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._cursor) % self.capacity

    def keys(self) -> np.ndarray:
        """Stored keys, oldest first."""
        return self._keys[self._order()]

    def origins(self) -> np.ndarray:
        return self._origins[self._order()]


def momentum_update(shadow: dict[str, np.ndarray], query: Mapping[str, np.ndarray],
                    m: float) -> dict[str, np.ndarray]:
    """In place: ``shadow <- m * shadow + (1 - m) * query`` for every shadow entry."""
    if set(shadow) != set(query):
        raise ShapeError(f"momentum_update: parameter names differ: "
                         f"{sorted(set(shadow) ^ set(query))}")
    for name, s in shadow.items():
        q = query[name]
        if s.shape != q.shape:
            raise ShapeError(f"{name}: shadow {s.shape} vs query {q.shape}")
        s *= m
        s += (1.0 - m) * q
    return shadow


def query_names(params: Mapping) -> list[str]:
    return sorted(k for k in params if k.startswith(("enc/", "proj/")))


def make_shadow(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Momentum copy of the encoder and projection head."""
    return {k: np.array(params[k], copy=True) for k in query_names(params)}


def embed_keys(graphs: Sequence[LabeledGraph], shadow: Mapping[str, np.ndarray],
               enc_cfg: EncoderConfig) -> np.ndarray:
    """Unit projections from the momentum path; nothing is recorded for autodiff."""
    frozen = {k: (v.data if isinstance(v, Tensor) else v) for k, v in shadow.items()}
    h = np.stack([encode(g, frozen, enc_cfg).data for g in graphs])
    return ad.l2_normalize_rows(project(h, frozen)).data


def augment_views(batch: Sequence[LabeledGraph], aug: AugmentConfig, seed: int, epoch: int,
                  view: int) -> list[LabeledGraph]:
    return [sample_augmentation(g, aug, graph_rng(seed, g.graph_id, epoch, view)).graph
            for g in batch]


def warm_up_queue(corpus: Sequence[LabeledGraph], shadow: Mapping[str, np.ndarray],
                  queue: KeyQueue, cfg: CSSLConfig, enc_cfg: EncoderConfig,
                  seed: int = 0) -> KeyQueue:
    """Fill the queue with momentum keys of augmented corpus graphs.

    Cycles over the corpus with fresh augmentations until the queue is full.
    """
    if not corpus:
        raise InvalidArgument("cannot warm up a queue from an empty corpus")
    rounds = 0
    while not queue.full:
        need = queue.capacity - len(queue)
        chunk = list(corpus[:need])
        views = augment_views(chunk, cfg.augment, seed, rounds, WARMUP_VIEW)
        queue.enqueue(embed_keys(views, shadow, enc_cfg), [g.graph_id for g in chunk])
        rounds += 1
    return queue


@dataclass
class CSSLOutput:
    loss: Tensor
    keys: np.ndarray
    origins: np.ndarray


def cssl_loss(batch: Sequence[LabeledGraph], params: Mapping, shadow: Mapping[str, np.ndarray],
              queue: KeyQueue, cfg: CSSLConfig, enc_cfg: EncoderConfig,
              seed: int = 0, epoch: int = 0, train: bool = True) -> CSSLOutput:
    """Contrastive loss of one minibatch against the current queue.

    Queries come from ``params`` (tensors if gradients are wanted), keys from
    the ``shadow`` arrays.  The queue is not modified.
    """
    if len(queue) == 0:
        raise InvalidArgument("queue must be warmed up before the first step")
    q_views = augment_views(batch, cfg.augment, seed, epoch, QUERY_VIEW)
    k_views = augment_views(batch, cfg.augment, seed, epoch, KEY_VIEW)
    drop_rng = None
    if train and enc_cfg.dropout > 0:
        drop_rng = graph_rng(seed, batch[0].graph_id, epoch, DROPOUT_VIEW)
    h = ad.stack_rows([encode(g, params, enc_cfg, train, drop_rng) for g in q_views])
    q = ad.l2_normalize_rows(project(h, params))
    keys = embed_keys(k_views, shadow, enc_cfg)
    origins = np.array([g.graph_id for g in batch], dtype=np.int64)
    exclude = None
    if cfg.exclude_same_origin:
        exclude = origins[:, None] == queue.origins()[None, :]
    loss = batched_contrastive_loss(q, keys, queue.keys(), cfg.temperature, exclude)
    return CSSLOutput(loss, keys, origins)


def cssl_step(batch: Sequence[LabeledGraph], params: Mapping, shadow: dict[str, np.ndarray],
              queue: KeyQueue, cfg: CSSLConfig, enc_cfg: EncoderConfig,
              seed: int = 0, epoch: int = 0) -> tuple[Tensor, KeyQueue]:
    """One MoCo step: refresh the shadow, score the batch, then enqueue its keys.

    ``params`` may hold tensors; their array values feed the momentum update.
    """
    values = {k: (v.data if isinstance(v, Tensor) else v) for k, v in params.items()}
    momentum_update(shadow, {k: values[k] for k in shadow}, cfg.momentum)
    out = cssl_loss(batch, params, shadow, queue, cfg, enc_cfg, seed, epoch)
    queue.enqueue(out.keys, out.origins)
    return out.loss, queue
