"""Multi-seed experiment runner: regime comparison, lambda sweeps and the
single-operation ablation, with per-run directories and plot-ready tables."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .augment import ALTERATIONS, OpKind
from .errors import ConfigError, DataNotFound
from .graph import LabeledGraph
from .pipelines import Splits, TrainConfig, read_run_log, run_regime
from .tudata import Dataset, load_tu, make_splits

log = logging.getLogger(__name__)

AUGMENT_STEPS = (1, 3)
CORPORA = ("specific", "all")
# graph ids of auxiliary datasets are shifted so origins never collide
_ID_STRIDE = 10_000_000


@dataclass(frozen=True)
class ExperimentSpec:
    datasets: tuple[str, ...]
    data_root: str
    out_dir: str = "runs"
    regime: str = "reg"
    augment_steps: int = 1
    op_whitelist: tuple[OpKind, ...] = ALTERATIONS
    lambdas: tuple[float, ...] = (0.1,)
    seeds: tuple[int, ...] = tuple(range(10))
    subset: Optional[int] = None
    subset_seed: int = 0
    corpus: str = "specific"
    max_degree: int = 10
    workers: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.datasets:
            raise ConfigError("at least one dataset is required")
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if self.augment_steps not in AUGMENT_STEPS:
            raise ConfigError(f"augment_steps must be one of {AUGMENT_STEPS}")
        if self.corpus not in CORPORA:
            raise ConfigError(f"corpus must be one of {CORPORA}")
        if self.subset is not None and self.subset < 10:
            raise ConfigError("subset must hold at least 10 graphs")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if any(lam < 0 for lam in self.lambdas):
            raise ConfigError("lambda values must be >= 0")
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        object.__setattr__(self, "op_whitelist",
                           tuple(OpKind.parse(k) if isinstance(k, str) else OpKind(k)
                                 for k in self.op_whitelist))
        # keep the training config in step with the experiment-level knobs
        aug = replace(self.train.cssl.augment, num_steps=self.augment_steps,
                      op_whitelist=self.op_whitelist)
        train = replace(self.train, regime=self.regime, corpus=self.corpus,
                        cssl=replace(self.train.cssl, augment=aug))
        object.__setattr__(self, "train", train)

    def check_data(self) -> None:
        for name in self.datasets:
            if not (Path(self.data_root) / name / f"{name}_A.txt").is_file():
                raise DataNotFound(f"dataset {name} not found under {self.data_root}")


@dataclass(frozen=True)
class Job:
    dataset: str
    seed: int
    label: str
    cfg: TrainConfig
    out_dir: str
    spec: ExperimentSpec


@dataclass
class SummaryRow:
    dataset: str
    label: str
    lam: Optional[float]
    seeds: int
    acc_mean: float
    acc_std: float
    gap_mean: float
    gap_std: float
    train_mean: float

    @property
    def accuracy(self) -> str:
        return f"{self.acc_mean:.2f}±{self.acc_std:.2f}"

    @property
    def gap(self) -> str:
        return f"{self.gap_mean:.2f}±{self.gap_std:.2f}"


def _load(spec: ExperimentSpec, name: str) -> Dataset:
    features = "degree" if spec.corpus == "all" else "auto"
    ds = load_tu(spec.data_root, name, spec.max_degree, features)
    if spec.subset is not None and spec.subset < len(ds):
        ids = sorted(g.graph_id for g in ds.graphs)
        pick = np.random.default_rng(spec.subset_seed).choice(ids, spec.subset, replace=False)
        ds = ds.subset(sorted(int(i) for i in pick))
    return ds


def _shift(graphs: Sequence[LabeledGraph], offset: int) -> list[LabeledGraph]:
    return [g.replace(graph_id=g.graph_id + offset) for g in graphs] if offset else list(graphs)


def run_job(job: Job) -> dict:
    """Train one (dataset, seed, configuration) and persist its logs."""
    spec = job.spec
    ds = _load(spec, job.dataset)
    splits = Splits.from_plan(ds, make_splits(ds, job.seed))
    corpus = None
    if spec.corpus == "all":
        corpus = list(splits.train)
        for k, other in enumerate(n for n in spec.datasets if n != job.dataset):
            ods = _load(spec, other)
            oplan = make_splits(ods, job.seed)
            corpus += _shift(ods.select(oplan.train_ids), (k + 1) * _ID_STRIDE)
    result = run_regime(splits, job.cfg, corpus)
    entry = result.write(job.out_dir)
    entry.update({"dataset": job.dataset, "seed": job.seed, "label": job.label,
                  "regime": job.cfg.regime, "lam": job.cfg.lam})
    log.info("%s %s seed %d: test %.4f gap %.4f", job.dataset, job.label, job.seed,
             result.test_acc, result.gap)
    return entry


def _execute(jobs: list[Job], workers: int) -> list[dict]:
    if workers == 1 or len(jobs) == 1:
        return [run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_job, jobs))


def _jobs(spec: ExperimentSpec, configs: Sequence[tuple[str, TrainConfig]]) -> list[Job]:
    root = Path(spec.out_dir)
    return [Job(name, seed, label, replace(cfg, seed=seed),
                str(root / name / label / f"seed{seed}"), spec)
            for name in spec.datasets for label, cfg in configs for seed in spec.seeds]


def summarize(entries: Sequence[dict]) -> list[SummaryRow]:
    """Aggregate persisted run logs into mean/std rows (accuracies in percent).

    Values are read back from each run's log file, never from memory.
    """
    groups: dict[tuple[str, str], list[dict]] = {}
    for e in entries:
        groups.setdefault((e["dataset"], e["label"]), []).append(e)
    rows = []
    for (name, label), group in groups.items():
        summaries = [read_run_log(e["epochs"])[1] for e in group]
        test = 100 * np.array([s["test_acc"] for s in summaries])
        gap = 100 * np.array([s["gap"] for s in summaries])
        train = 100 * np.array([s["train_acc"] for s in summaries])
        lam = group[0]["lam"] if group[0]["regime"] == "reg" else None
        rows.append(SummaryRow(name, label, lam, len(group), float(test.mean()),
                               float(test.std()), float(gap.mean()), float(gap.std()),
                               float(train.mean())))
    return rows


def format_table(rows: Sequence[SummaryRow]) -> str:
    head = ["dataset", "config", "seeds", "test acc (%)", "train-test gap (%)"]
    body = [[r.dataset, r.label, str(r.seeds), r.accuracy, r.gap] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()  # noqa: E731
    return "\n".join([line(head), line(["-" * w for w in widths])] + [line(b) for b in body]) + "\n"


def write_tsv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    def cell(x):
        return f"{x:.6g}" if isinstance(x, float) else str(x)

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\t".join(header) + "\n" +
                    "".join("\t".join(cell(x) for x in r) + "\n" for r in rows))
    return path


def _finish(spec: ExperimentSpec, entries: list[dict], name: str) -> list[SummaryRow]:
    root = Path(spec.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / f"{name}_manifest.json").write_text(json.dumps(entries, indent=1, sort_keys=True))
    rows = summarize(entries)
    write_tsv(root / f"{name}.tsv",
              ["dataset", "config", "lambda", "seeds", "acc_mean", "acc_std", "gap_mean",
               "gap_std", "train_acc_mean"],
              [[r.dataset, r.label, "" if r.lam is None else r.lam, r.seeds, r.acc_mean,
                r.acc_std, r.gap_mean, r.gap_std, r.train_mean] for r in rows])
    (root / f"{name}.txt").write_text(format_table(rows))
    return rows


def _lam_label(lam: float) -> str:
    return f"lam{lam:g}"


def run_experiment(spec: ExperimentSpec) -> list[SummaryRow]:
    """One row per dataset (and per lambda for the joint regime)."""
    spec.check_data()
    if spec.regime == "reg":
        if not spec.lambdas:
            raise ConfigError("the reg regime needs at least one lambda")
        configs = [(_lam_label(lam), replace(spec.train, lam=lam)) for lam in spec.lambdas]
    else:
        configs = [(spec.regime, spec.train)]
    return _finish(spec, _execute(_jobs(spec, configs), spec.workers), "summary")


def run_lambda_sweep(spec: ExperimentSpec) -> list[SummaryRow]:
    """Accuracy against lambda, lambda = 0 included, sorted ascending.

    Also writes ``lambda_sweep.tsv`` with the columns ``lambda acc_mean acc_std``.
    """
    if spec.regime != "reg":
        raise ConfigError("a lambda sweep needs regime = reg")
    if not spec.lambdas:
        raise ConfigError("lambda list must not be empty")
    spec.check_data()
    lams = sorted(set(spec.lambdas) | {0.0})
    configs = [(_lam_label(lam), replace(spec.train, lam=lam)) for lam in lams]
    rows = _finish(spec, _execute(_jobs(spec, configs), spec.workers), "sweep")
    rows.sort(key=lambda r: (r.dataset, r.lam))
    write_tsv(Path(spec.out_dir) / "lambda_sweep.tsv",
              ["dataset", "lambda", "acc_mean", "acc_std", "gap_mean"],
              [[r.dataset, r.lam, r.acc_mean, r.acc_std, r.gap_mean] for r in rows])
    return rows


def run_op_ablation(spec: ExperimentSpec) -> list[SummaryRow]:
    """Each alteration kind on its own, then all four drawn at random (five rows)."""
    if spec.regime != "reg":
        raise ConfigError("the operation ablation needs regime = reg")
    if not spec.lambdas:
        raise ConfigError("the ablation needs a lambda")
    spec.check_data()
    base = replace(spec.train, lam=spec.lambdas[0])
    configs = []
    for kinds, label in [((k,), k.value) for k in ALTERATIONS] + [(ALTERATIONS, "random")]:
        aug = replace(base.cssl.augment, op_whitelist=kinds)
        configs.append((label, replace(base, cssl=replace(base.cssl, augment=aug))))
    rows = _finish(spec, _execute(_jobs(spec, configs), spec.workers), "ablation")
    order = {label: i for i, (label, _) in enumerate(configs)}
    rows.sort(key=lambda r: (r.dataset, order[r.label]))
    return rows
