"""Training regimes: supervised baseline, contrastive pretraining followed by
finetuning, the joint classification + contrastive objective, and head-only
training on a frozen encoder."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .augment import AugmentConfig
from .contrastive import (CSSLConfig, KeyQueue, cssl_loss, init_projection, make_shadow,
                          momentum_update, warm_up_queue)
from .encoder import (EncoderConfig, classify, encode, encode_batch, encoder_params,
                      head_params, init_encoder, init_head)
from .errors import ConfigError, InvalidArgument
from .graph import LabeledGraph
from .optim import Adam, cosine_lr
from .tudata import Dataset, SplitPlan

log = logging.getLogger(__name__)

REGIMES = ("supervised_only", "pretrain_finetune", "reg", "freeze")


@dataclass(frozen=True)
class TrainConfig:
    regime: str = "supervised_only"
    lam: float = 0.1
    lr: float = 1e-3
    pretrain_lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 1000
    pretrain_epochs: int = 100
    patience: int = 100
    seed: int = 0
    weight_decay: float = 0.0
    corpus: str = "specific"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    cssl: CSSLConfig = field(default_factory=CSSLConfig)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if self.corpus not in ("specific", "all"):
            raise ConfigError(f"unknown corpus selector {self.corpus!r}")


@dataclass
class Splits:
    train: list[LabeledGraph]
    val: list[LabeledGraph]
    test: list[LabeledGraph]

    @classmethod
    def from_plan(cls, ds: Dataset, plan: SplitPlan) -> "Splits":
        return cls(ds.select(plan.train_ids), ds.select(plan.val_ids), ds.select(plan.test_ids))

    @property
    def feature_dim(self) -> int:
        return self.train[0].feature_dim

    @property
    def num_classes(self) -> int:
        return 1 + max(g.label for g in self.train + self.val + self.test)


@dataclass
class RunResult:
    epochs: list[dict]
    best_epoch: int
    test_acc: float
    train_acc: float
    val_acc: float
    wall_clock: float = 0.0
    params: dict = field(default_factory=dict, repr=False)

    @property
    def gap(self) -> float:
        return abs(self.train_acc - self.test_acc)

    def summary(self) -> dict:
        """Deterministic metrics only; wall-clock time goes to the manifest instead."""
        return {"record": "summary", "best_epoch": self.best_epoch, "test_acc": self.test_acc,
                "train_acc": self.train_acc, "val_acc": self.val_acc, "gap": self.gap,
                "epochs_run": len(self.epochs)}

    def epoch_lines(self) -> str:
        return "".join(json.dumps({"record": "epoch", **e}, sort_keys=True) + "\n"
                       for e in self.epochs)

    def write(self, out_dir) -> dict:
        """Persist epoch log, summary and checkpoint; returns the manifest entry."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "epochs.jsonl").write_text(
            self.epoch_lines() + json.dumps(self.summary(), sort_keys=True) + "\n")
        ckpt = checkpoint.save(out / "checkpoint.bin", self.params)
        return {"dir": str(out), "checkpoint": str(ckpt), "epochs": str(out / "epochs.jsonl"),
                "wall_clock": self.wall_clock}


@dataclass
class PretrainResult:
    encoder: dict[str, np.ndarray]
    epoch_losses: list[float]
    state: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    """Encoder, projection head and momentum copy (``mom/`` prefix), for inspection."""


def read_run_log(path) -> tuple[list[dict], dict]:
    epochs, summary = [], {}
    for line in Path(path).read_text().splitlines():
        rec = json.loads(line)
        if rec.pop("record") == "epoch":
            epochs.append(rec)
        else:
            summary = rec
    return epochs, summary


# evaluation


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    if len(labels) == 0:
        raise InvalidArgument("accuracy of an empty split")
    return float(np.mean(predictions == labels))


def logits_of(params: Mapping, enc_cfg: EncoderConfig, graphs: Sequence[LabeledGraph]) -> np.ndarray:
    return classify(encode_batch(graphs, params, enc_cfg), params).data


def evaluate(params: Mapping, enc_cfg: EncoderConfig, graphs: Sequence[LabeledGraph]) -> float:
    """Argmax accuracy in eval mode."""
    if not graphs:
        raise InvalidArgument("cannot evaluate an empty split")
    return accuracy(logits_of(params, enc_cfg, graphs).argmax(axis=1), [g.label for g in graphs])


def loss_and_accuracy(params: Mapping, enc_cfg: EncoderConfig,
                      graphs: Sequence[LabeledGraph]) -> tuple[float, float]:
    logits = logits_of(params, enc_cfg, graphs)
    labels = np.array([g.label for g in graphs])
    return ad.cross_entropy(logits, labels).item(), accuracy(logits.argmax(axis=1), labels)


# shared pieces


def _batches(graphs: Sequence[LabeledGraph], size: int, rng: np.random.Generator):
    order = rng.permutation(len(graphs))
    for i in range(0, len(graphs), size):
        yield [graphs[j] for j in order[i:i + size]]


def _epoch_rng(seed: int, epoch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, stream])


def _check_dims(splits: Splits, params: Mapping[str, np.ndarray]):
    expected = params["enc/layer0/W"].shape[0]
    if splits.feature_dim != expected:
        raise ConfigError(f"dataset feature dim {splits.feature_dim} does not match "
                          f"encoder input dim {expected}")


def _copy(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.array(v, copy=True) for k, v in params.items()}


def classification_loss(batch: Sequence[LabeledGraph], leaves: Mapping, enc_cfg: EncoderConfig,
                        rng: Optional[np.random.Generator] = None):
    """Mean cross-entropy on un-augmented graphs; also returns the logits tensor."""
    train = rng is not None
    h = encode_batch(batch, leaves, enc_cfg, train=train, rng=rng)
    logits = classify(h, leaves, enc_cfg.dropout if train else 0.0, rng)
    return ad.cross_entropy(logits, [g.label for g in batch]), logits


def _supervised_loop(splits: Splits, params: dict[str, np.ndarray], cfg: TrainConfig,
                     step_loss: Callable, trainable: Callable[[str], bool]) -> RunResult:
    """Adam at constant lr with early stopping on validation cross-entropy.

    ``step_loss(batch, leaves, epoch, rng)`` returns ``(loss, logits, extras)``.
    """
    start = time.perf_counter()
    opt = Adam(lr=cfg.lr, weight_decay=cfg.weight_decay)
    best_val, best_epoch, best_params, bad = np.inf, -1, _copy(params), 0
    epochs = []
    for epoch in range(cfg.max_epochs):
        shuffle = _epoch_rng(cfg.seed, epoch, 0)
        drop = _epoch_rng(cfg.seed, epoch, 1)
        losses, correct, seen, extra_sum = [], 0, 0, {}
        for batch in _batches(splits.train, cfg.batch_size, shuffle):
            leaves = {k: ad.Tensor(v, requires_grad=trainable(k), name=k)
                      for k, v in params.items()}
            loss, logits, extras = step_loss(batch, leaves, epoch, drop)
            grads = ad.backward(loss)
            opt.step(params, {k: g for k, g in grads.items() if trainable(k)})
            losses.append(loss.item() * len(batch))
            correct += int((logits.data.argmax(axis=1) == [g.label for g in batch]).sum())
            seen += len(batch)
            for k, v in extras.items():
                extra_sum[k] = extra_sum.get(k, 0.0) + v * len(batch)
        val_loss, val_acc = loss_and_accuracy(params, cfg.encoder, splits.val)
        rec = {"epoch": epoch, "train_loss": sum(losses) / seen, "train_acc": correct / seen,
               "val_loss": val_loss, "val_acc": val_acc}
        rec.update({k: v / seen for k, v in extra_sum.items()})
        epochs.append(rec)
        if val_loss < best_val:
            best_val, best_epoch, best_params, bad = val_loss, epoch, _copy(params), 0
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    train_acc = evaluate(best_params, cfg.encoder, splits.train)
    val_acc = evaluate(best_params, cfg.encoder, splits.val)
    test_acc = evaluate(best_params, cfg.encoder, splits.test)
    return RunResult(epochs, best_epoch, test_acc, train_acc, val_acc,
                     time.perf_counter() - start, best_params)


def init_model(splits: Splits, cfg: TrainConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([cfg.seed, 101])
    return init_encoder(splits.feature_dim, splits.num_classes, cfg.encoder, rng)


# regimes


def train_supervised(splits: Splits, cfg: TrainConfig,
                     init: Optional[Mapping[str, np.ndarray]] = None) -> RunResult:
    params = init_model(splits, cfg)
    if init is not None:
        _check_dims(splits, init)
        for k, v in encoder_params(init).items():
            if k not in params or params[k].shape != v.shape:
                raise ConfigError(f"pretrained parameter {k} does not fit the model")
            params[k] = np.array(v, copy=True)
    _check_dims(splits, params)

    def step(batch, leaves, epoch, rng):
        loss, logits = classification_loss(batch, leaves, cfg.encoder, rng)
        return loss, logits, {}

    return _supervised_loop(splits, params, cfg, step, lambda k: True)


def finetune(splits: Splits, init: Mapping[str, np.ndarray], cfg: TrainConfig) -> RunResult:
    """Initialize the encoder from ``init`` and train encoder + a fresh head."""
    return train_supervised(splits, cfg, init)


def setup_cssl(params: dict[str, np.ndarray], corpus: Sequence[LabeledGraph], cfg: TrainConfig,
               queue_size: int) -> tuple[dict[str, np.ndarray], KeyQueue]:
    """Add a projection head to ``params`` and return its momentum copy plus a warm queue."""
    enc_cfg = cfg.encoder
    rng = np.random.default_rng([cfg.seed, 202])
    hidden = cfg.cssl.proj_hidden or enc_cfg.hidden_dim
    params.update(init_projection(enc_cfg.embedding_dim, hidden, cfg.cssl.proj_dim, rng))
    shadow = make_shadow(params)
    queue = KeyQueue(queue_size, cfg.cssl.proj_dim)
    warm_up_queue(list(corpus), shadow, queue, cfg.cssl, enc_cfg, cfg.seed)
    return shadow, queue


def reg_losses(batch: Sequence[LabeledGraph], leaves: Mapping, shadow: dict, queue: KeyQueue,
               cfg: TrainConfig, epoch: int, rng: Optional[np.random.Generator]):
    """Classification loss, contrastive loss and momentum keys for one batch.

    The momentum shadow is refreshed first; the queue is left untouched.
    """
    values = {k: leaves[k].data for k in shadow}
    momentum_update(shadow, values, cfg.cssl.momentum)
    cls, logits = classification_loss(batch, leaves, cfg.encoder, rng)
    out = cssl_loss(batch, leaves, shadow, queue, cfg.cssl, cfg.encoder, cfg.seed, epoch,
                    train=rng is not None)
    return cls, out, logits


def train_reg(splits: Splits, cfg: TrainConfig, corpus: Optional[Sequence[LabeledGraph]] = None,
              force_cssl: bool = False) -> RunResult:
    """Joint objective: cross-entropy + lam * contrastive loss through a shared encoder.

    With ``lam == 0`` the contrastive branch is skipped (it cannot change any
    gradient) unless ``force_cssl`` is set.
    """
    params = init_model(splits, cfg)
    _check_dims(splits, params)
    if cfg.lam == 0 and not force_cssl:
        return _supervised_loop(
            splits, params, cfg,
            lambda b, lv, e, r: (*classification_loss(b, lv, cfg.encoder, r), {}),
            lambda k: True)
    shadow, queue = setup_cssl(params, corpus or splits.train, cfg, cfg.cssl.queue_size)

    def step(batch, leaves, epoch, rng):
        cls, out, logits = reg_losses(batch, leaves, shadow, queue, cfg, epoch, rng)
        queue.enqueue(out.keys, out.origins)
        return cls + cfg.lam * out.loss, logits, {"cls_loss": cls.item(),
                                                  "cssl_loss": out.loss.item()}

    result = _supervised_loop(splits, params, cfg, step, lambda k: True)
    result.params = {k: v for k, v in result.params.items() if not k.startswith("proj/")}
    return result


def pretrain(corpus: Sequence[LabeledGraph], cfg: TrainConfig, feature_dim: Optional[int] = None,
             num_classes: int = 2) -> PretrainResult:
    """Contrastive pretraining with cosine-decayed Adam; returns ``enc/`` weights only."""
    if not corpus:
        raise InvalidArgument("pretraining corpus is empty")
    corpus = list(corpus)
    feature_dim = feature_dim or corpus[0].feature_dim
    params = init_encoder(feature_dim, num_classes, cfg.encoder,
                          np.random.default_rng([cfg.seed, 101]))
    params = encoder_params(params)
    shadow, queue = setup_cssl(params, corpus, cfg, cfg.cssl.queue_size)
    opt = Adam(lr=cfg.pretrain_lr, weight_decay=cfg.weight_decay)
    steps_per_epoch = -(-len(corpus) // cfg.batch_size)
    total = max(1, cfg.pretrain_epochs * steps_per_epoch)
    step_no = 0
    epoch_losses = []
    for epoch in range(cfg.pretrain_epochs):
        shuffle = _epoch_rng(cfg.seed, epoch, 0)
        total_loss = 0.0
        for batch in _batches(corpus, cfg.batch_size, shuffle):
            leaves = ad.leaves(params)
            momentum_update(shadow, params, cfg.cssl.momentum)
            out = cssl_loss(batch, leaves, shadow, queue, cfg.cssl, cfg.encoder, cfg.seed, epoch)
            grads = ad.backward(out.loss)
            opt.step(params, grads, lr=cosine_lr(cfg.pretrain_lr, step_no, total))
            queue.enqueue(out.keys, out.origins)
            total_loss += out.loss.item() * len(batch)
            step_no += 1
        epoch_losses.append(total_loss / len(corpus))
        log.debug("pretrain epoch %d loss %.4f", epoch, epoch_losses[-1])
    state = {**params, **{f"mom/{k}": v for k, v in shadow.items()}}
    return PretrainResult(encoder_params(params), epoch_losses, state)


def train_freeze(splits: Splits, init: Mapping[str, np.ndarray], cfg: TrainConfig) -> RunResult:
    """Train only a fresh classification head on top of the frozen ``init`` encoder.

    Embeddings are computed once in eval mode, since the encoder never changes.
    """
    _check_dims(splits, init)
    start = time.perf_counter()
    enc = _copy(encoder_params(init))
    rng = np.random.default_rng([cfg.seed, 101])
    head = init_head(cfg.encoder.embedding_dim, cfg.encoder.hidden_dim, splits.num_classes, rng)
    embed = {id(g): encode(g, enc, cfg.encoder).data
             for g in splits.train + splits.val + splits.test}
    labels = lambda gs: [g.label for g in gs]  # noqa: E731

    def stats(p, gs):
        logits = classify(np.stack([embed[id(g)] for g in gs]), p).data
        return (ad.cross_entropy(logits, labels(gs)).item(),
                accuracy(logits.argmax(axis=1), labels(gs)))

    opt = Adam(lr=cfg.lr, weight_decay=cfg.weight_decay)
    best_val, best_epoch, best_head, bad = np.inf, -1, _copy(head), 0
    epochs = []
    for epoch in range(cfg.max_epochs):
        shuffle = _epoch_rng(cfg.seed, epoch, 0)
        drop = _epoch_rng(cfg.seed, epoch, 1)
        losses, correct, seen = 0.0, 0, 0
        for batch in _batches(splits.train, cfg.batch_size, shuffle):
            leaves = ad.leaves(head)
            h = np.stack([embed[id(g)] for g in batch])
            logits = classify(h, leaves, cfg.encoder.dropout, drop)
            loss = ad.cross_entropy(logits, labels(batch))
            opt.step(head, ad.backward(loss))
            losses += loss.item() * len(batch)
            correct += int((logits.data.argmax(axis=1) == labels(batch)).sum())
            seen += len(batch)
        val_loss, val_acc = stats(head, splits.val)
        epochs.append({"epoch": epoch, "train_loss": losses / seen, "train_acc": correct / seen,
                       "val_loss": val_loss, "val_acc": val_acc})
        if val_loss < best_val:
            best_val, best_epoch, best_head, bad = val_loss, epoch, _copy(head), 0
        else:
            bad += 1
            if bad >= cfg.patience:
                break
    final = {**enc, **best_head}
    return RunResult(epochs, best_epoch, stats(best_head, splits.test)[1],
                     stats(best_head, splits.train)[1], stats(best_head, splits.val)[1],
                     time.perf_counter() - start, final)


def run_regime(splits: Splits, cfg: TrainConfig,
               corpus: Optional[Sequence[LabeledGraph]] = None) -> RunResult:
    """Dispatch on ``cfg.regime``; ``corpus`` feeds the contrastive task (default: train split)."""
    corpus = list(corpus) if corpus is not None else splits.train
    if cfg.regime == "supervised_only":
        return train_supervised(splits, cfg)
    if cfg.regime == "reg":
        return train_reg(splits, cfg, corpus)
    pre = pretrain(corpus, cfg, splits.feature_dim, splits.num_classes)
    if cfg.regime == "pretrain_finetune":
        return finetune(splits, pre.encoder, cfg)
    return train_freeze(splits, pre.encoder, cfg)
