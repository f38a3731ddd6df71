"""Command line entry point.

Every command reads an optional INI file whose sections mirror the modules
(``[data]``, ``[experiment]``, ``[encoder]``, ``[contrastive]``, ``[pipelines]``);
flags and ``--set section.key=value`` pairs override it.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import checkpoint
from .augment import OpKind
from .contrastive import CSSLConfig
from .encoder import EncoderConfig
from .errors import ConfigError, GraphCSSLError
from .experiments import (ExperimentSpec, format_table, run_experiment, run_lambda_sweep,
                          run_op_ablation, write_tsv)
from .pipelines import REGIMES, TrainConfig, pretrain
from .tudata import dataset_stats, load_tu, make_splits

log = logging.getLogger("graphcssl")

SECTIONS = ("data", "experiment", "encoder", "contrastive", "pipelines")
_EXPERIMENT_KEYS = ("datasets", "regime", "seeds", "lambdas", "augment_steps", "op_whitelist",
                    "subset", "subset_seed", "corpus", "workers", "out_dir")
_PIPELINE_KEYS = ("lr", "pretrain_lr", "batch_size", "max_epochs", "pretrain_epochs",
                  "patience", "weight_decay", "lam")


def parse_list(text: str, kind=str) -> list:
    """Comma separated values; integer ranges may be written ``a-b`` (inclusive)."""
    out = []
    for part in (p.strip() for p in str(text).split(",")):
        if not part:
            continue
        if kind is int and "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(kind(part))
    return out


def _coerce(value: str, default, key: str):
    try:
        if isinstance(default, bool):
            low = value.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(value)
            return low in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float) or default is None:
            return float(value) if value.strip().lower() != "none" else None
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return value


def _section_to_dataclass(cls, values: dict, section: str):
    defaults = {f.name: getattr(cls(), f.name) for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        default = defaults[key]
        if dataclasses.is_dataclass(default):
            raise ConfigError(f"[{section}] {key} cannot be set here; use [experiment]")
        if key == "proj_hidden":
            kwargs[key] = None if raw.strip().lower() == "none" else int(raw)
        else:
            kwargs[key] = _coerce(raw, default, f"{section}.{key}")
    try:
        return cls(**kwargs)
    except GraphCSSLError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def load_config(path: Optional[str], overrides: Sequence[str] = ()) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if path:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found")
        parser.read(path)
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]; expected {SECTIONS}")
    out = {s: dict(parser[s]) if parser.has_section(s) else {} for s in SECTIONS}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        out[section][key] = value
    unknown = set(out["data"]) - {"root", "max_degree"}
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in section [data]")
    return out


def _flag_overrides(args, conf: dict[str, dict[str, str]]) -> None:
    exp = conf["experiment"]
    for flag, key in [("dataset", "datasets"), ("regime", "regime"), ("seeds", "seeds"),
                      ("lambdas", "lambdas"), ("augment_steps", "augment_steps"),
                      ("ops", "op_whitelist"), ("subset", "subset"), ("corpus", "corpus"),
                      ("workers", "workers"), ("out", "out_dir")]:
        value = getattr(args, flag, None)
        if value is not None:
            exp[key] = ",".join(value) if isinstance(value, list) else str(value)
    if getattr(args, "data_root", None):
        conf["data"]["root"] = args.data_root
    for key in ("max_epochs", "patience", "lr", "batch_size", "pretrain_epochs"):
        value = getattr(args, key, None)
        if value is not None:
            conf["pipelines"][key] = str(value)


def _data_root(conf) -> str:
    root = conf["data"].get("root") or os.environ.get("GRAPHCSSL_DATA_ROOT")
    if not root:
        raise ConfigError("no dataset root: pass --data-root, set [data] root, "
                          "or export GRAPHCSSL_DATA_ROOT")
    return root


def build_train_config(conf) -> TrainConfig:
    encoder = _section_to_dataclass(EncoderConfig, conf["encoder"], "encoder")
    cssl_vals = dict(conf["contrastive"])
    cssl = _section_to_dataclass(CSSLConfig, cssl_vals, "contrastive")
    unknown = set(conf["pipelines"]) - set(_PIPELINE_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in section [pipelines]")
    defaults = TrainConfig()
    kwargs = {k: _coerce(v, getattr(defaults, k), f"pipelines.{k}")
              for k, v in conf["pipelines"].items()}
    return TrainConfig(encoder=encoder, cssl=cssl, **kwargs)


def build_spec(conf, default_regime: str = "reg") -> ExperimentSpec:
    exp = conf["experiment"]
    unknown = set(exp) - set(_EXPERIMENT_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in section [experiment]")
    if not exp.get("datasets"):
        raise ConfigError("no dataset given (use --dataset or [experiment] datasets)")
    kwargs = dict(datasets=tuple(parse_list(exp["datasets"])), data_root=_data_root(conf),
                  regime=exp.get("regime", default_regime), train=build_train_config(conf))
    try:
        if "seeds" in exp:
            kwargs["seeds"] = tuple(parse_list(exp["seeds"], int))
        if "lambdas" in exp:
            kwargs["lambdas"] = tuple(parse_list(exp["lambdas"], float))
        if "op_whitelist" in exp:
            kwargs["op_whitelist"] = tuple(OpKind.parse(k) for k in parse_list(exp["op_whitelist"]))
        for key in ("augment_steps", "subset", "subset_seed", "workers"):
            if key in exp:
                kwargs[key] = int(exp[key])
    except ValueError as exc:
        raise ConfigError(f"[experiment] {exc}") from None
    for key in ("corpus", "out_dir"):
        if key in exp:
            kwargs[key] = exp[key]
    if "max_degree" in conf["data"]:
        kwargs["max_degree"] = int(conf["data"]["max_degree"])
    if kwargs["regime"] not in REGIMES:
        raise ConfigError(f"unknown regime {kwargs['regime']!r}; expected one of {REGIMES}")
    try:
        return ExperimentSpec(**kwargs)
    except GraphCSSLError as exc:
        raise ConfigError(str(exc)) from None


# commands


def cmd_load_stats(args, conf) -> int:
    root = _data_root(conf)
    names = parse_list(conf["experiment"].get("datasets", ""))
    if not names:
        raise ConfigError("no dataset given")
    seed = args.seed
    records = []
    for name in names:
        ds = load_tu(root, name, int(conf["data"].get("max_degree", 10)))
        stats = dataset_stats(ds)
        stats["split_sizes"] = list(make_splits(ds, seed).sizes)
        records.append(stats)
    if args.json:
        print(json.dumps(records, indent=1))
    else:
        print("name\tgraphs\tclasses\tavg_nodes\tavg_edges\tfeature_dim\ttrain/val/test")
        for s in records:
            print(f"{s['name']}\t{s['num_graphs']}\t{s['num_classes']}\t{s['avg_nodes']:.1f}\t"
                  f"{s['avg_edges']:.1f}\t{s['feature_dim']}\t"
                  f"{'/'.join(map(str, s['split_sizes']))}")
    return 0


def cmd_pretrain(args, conf) -> int:
    spec = build_spec(conf, default_regime="pretrain_finetune")
    spec.check_data()
    from .experiments import _load  # same featurization and subsetting as the runner

    out = Path(spec.out_dir)
    for name in spec.datasets:
        ds = _load(spec, name)
        for seed in spec.seeds:
            plan = make_splits(ds, seed)
            cfg = dataclasses.replace(spec.train, seed=seed)
            res = pretrain(ds.select(plan.train_ids), cfg, ds.feature_dim, ds.num_classes)
            run_dir = out / name / f"seed{seed}"
            checkpoint.save(run_dir / "encoder.bin", res.encoder)
            checkpoint.save(run_dir / "pretrain_state.bin", res.state)
            write_tsv(run_dir / "pretrain_loss.tsv", ["epoch", "loss"],
                      [[i, x] for i, x in enumerate(res.epoch_losses)])
            print(f"{name} seed {seed}: loss {res.epoch_losses[0]:.4f} -> "
                  f"{res.epoch_losses[-1]:.4f}; encoder saved to {run_dir / 'encoder.bin'}")
    return 0


def _report(rows, out_dir, name):
    print(format_table(rows), end="")
    print(f"tables written to {Path(out_dir) / name}.tsv")


def cmd_train(args, conf) -> int:
    spec = build_spec(conf, default_regime="supervised_only")
    _report(run_experiment(spec), spec.out_dir, "summary")
    return 0


def cmd_sweep(args, conf) -> int:
    spec = build_spec(conf)
    rows = run_lambda_sweep(spec)
    print("dataset\tlambda\tacc_mean\tacc_std")
    for r in rows:
        print(f"{r.dataset}\t{r.lam:g}\t{r.acc_mean:.2f}\t{r.acc_std:.2f}")
    print(f"plot data written to {Path(spec.out_dir) / 'lambda_sweep.tsv'}")
    return 0


def cmd_ablate(args, conf) -> int:
    spec = build_spec(conf)
    _report(run_op_ablation(spec), spec.out_dir, "ablation")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphcssl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, experiment=True):
        p.add_argument("--config", help="INI file with [data]/[experiment]/... sections")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
        p.add_argument("--data-root", help="directory holding <NAME>/<NAME>_A.txt etc.")
        p.add_argument("--dataset", action="append", help="dataset name (repeatable)")
        if not experiment:
            return
        p.add_argument("--out", help="output directory")
        p.add_argument("--seeds", help="e.g. 0,1,2 or 0-9")
        p.add_argument("--subset", type=int, help="use a fixed random subset of N graphs")
        p.add_argument("--workers", type=int)
        p.add_argument("--augment-steps", type=int, choices=(1, 3))
        p.add_argument("--ops", help="comma separated alteration kinds")
        p.add_argument("--corpus", choices=("specific", "all"))
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--pretrain-epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", type=int)

    p = sub.add_parser("load-stats", help="dataset statistics and split sizes")
    common(p, experiment=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_load_stats)

    p = sub.add_parser("pretrain", help="contrastive pretraining; saves encoder checkpoints")
    common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train a regime over seeds and summarize")
    common(p)
    p.add_argument("--regime", choices=REGIMES)
    p.add_argument("--lambdas", help="lambda values for the reg regime")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep-lambda", help="accuracy against lambda (plot columns)")
    common(p)
    p.add_argument("--lambdas", help="default 0.0001,0.001,0.01,0.1,1")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate-ops", help="one alteration kind at a time versus all four")
    common(p)
    p.add_argument("--lambdas", help="lambda used by every row (first value)")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = load_config(args.config, args.set)
        if args.command == "sweep-lambda" and args.lambdas is None \
                and "lambdas" not in conf["experiment"]:
            conf["experiment"]["lambdas"] = "0.0001,0.001,0.01,0.1,1"
        _flag_overrides(args, conf)
        return args.func(args, conf)
    except GraphCSSLError as exc:
        print(f"graphcssl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"graphcssl: DataNotFound: {exc}", file=sys.stderr)
        return 8


if __name__ == "__main__":
    sys.exit(main())
