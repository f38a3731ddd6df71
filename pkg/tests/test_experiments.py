import json
from dataclasses import replace

import numpy as np
import pytest

from graphcssl.augment import ALTERATIONS, OpKind
from graphcssl.contrastive import CSSLConfig
from graphcssl.encoder import EncoderConfig
from graphcssl.errors import ConfigError, DataNotFound
from graphcssl.experiments import (ExperimentSpec, format_table, run_experiment,
                                   run_lambda_sweep, run_op_ablation, summarize)
from graphcssl.pipelines import TrainConfig, read_run_log

from conftest import DATA_DIR

TINY = TrainConfig(encoder=EncoderConfig(num_layers=2, hidden_dim=8),
                   cssl=CSSLConfig(queue_size=16, proj_dim=8), batch_size=8, max_epochs=2,
                   pretrain_epochs=1, lr=1e-2)


def spec(tmp_path, **kw):
    base = dict(datasets=("MUTAG",), data_root=str(DATA_DIR), out_dir=str(tmp_path / "out"),
                seeds=(0, 1), subset=30, train=TINY)
    base.update(kw)
    return ExperimentSpec(**base)


class TestSpec:
    def test_rejects_empty_seeds(self, tmp_path):
        with pytest.raises(ConfigError):
            spec(tmp_path, seeds=())

    def test_rejects_odd_step_count(self, tmp_path):
        with pytest.raises(ConfigError):
            spec(tmp_path, augment_steps=2)

    def test_pushes_augment_settings_into_config(self, tmp_path):
        s = spec(tmp_path, augment_steps=3, op_whitelist=("NodeInsertion",), regime="freeze")
        assert s.train.regime == "freeze"
        assert s.train.cssl.augment.num_steps == 3
        assert s.train.cssl.augment.op_whitelist == (OpKind.NODE_INSERTION,)

    def test_default_seed_count(self, tmp_path):
        assert len(ExperimentSpec(("MUTAG",), str(DATA_DIR)).seeds) == 10

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(DataNotFound):
            run_experiment(spec(tmp_path, datasets=("PROTEINS_MISSING",)))


class TestRunExperiment:
    def test_rows_and_files(self, tmp_path):
        s = spec(tmp_path, regime="supervised_only")
        rows = run_experiment(s)
        assert len(rows) == 1 and rows[0].seeds == 2 and rows[0].lam is None
        out = tmp_path / "out"
        assert (out / "summary.tsv").is_file() and (out / "summary.txt").is_file()
        entries = json.loads((out / "summary_manifest.json").read_text())
        assert len(entries) == 2
        accs = [read_run_log(e["epochs"])[1]["test_acc"] * 100 for e in entries]
        assert rows[0].acc_mean == pytest.approx(np.mean(accs))
        assert rows[0].acc_std == pytest.approx(np.std(accs))
        gaps = [abs(read_run_log(e["epochs"])[1]["train_acc"] - read_run_log(e["epochs"])[1]
                    ["test_acc"]) * 100 for e in entries]
        assert rows[0].gap_mean == pytest.approx(np.mean(gaps))

    def test_single_seed_format(self, tmp_path):
        (row,) = run_experiment(spec(tmp_path, regime="supervised_only", seeds=(3,)))
        assert row.acc_std == 0.0
        assert row.accuracy == f"{row.acc_mean:.2f}±0.00"
        assert "±" in format_table([row])

    def test_rerun_is_identical(self, tmp_path):
        s = spec(tmp_path, regime="reg", lambdas=(0.1,), seeds=(0,))
        first = (tmp_path / "out" / "summary.tsv")
        run_experiment(s)
        a = first.read_text()
        run_experiment(s)
        assert first.read_text() == a

    def test_parallel_matches_serial(self, tmp_path):
        s1 = spec(tmp_path / "a", regime="supervised_only")
        s2 = spec(tmp_path / "b", regime="supervised_only", workers=2)
        r1, r2 = run_experiment(s1), run_experiment(s2)
        assert [(r.acc_mean, r.gap_mean) for r in r1] == [(r.acc_mean, r.gap_mean) for r in r2]

    def test_all_corpus(self, tmp_path):
        s = spec(tmp_path, regime="reg", corpus="all", datasets=("MUTAG", "MUTAG"), seeds=(0,))
        assert len(run_experiment(s)) == 1


class TestSweep:
    def test_six_rows_sorted(self, tmp_path):
        s = spec(tmp_path, lambdas=(1.0, 0.0001, 0.1, 0.01, 0.001), seeds=(0,), subset=20)
        rows = run_lambda_sweep(s)
        assert [r.lam for r in rows] == [0.0, 0.0001, 0.001, 0.01, 0.1, 1.0]
        lines = (tmp_path / "out" / "lambda_sweep.tsv").read_text().splitlines()
        assert lines[0].split("\t") == ["dataset", "lambda", "acc_mean", "acc_std", "gap_mean"]
        assert len(lines) == 7

    def test_zero_already_present(self, tmp_path):
        rows = run_lambda_sweep(spec(tmp_path, lambdas=(0.0, 0.1), seeds=(0,), subset=20))
        assert [r.lam for r in rows] == [0.0, 0.1]

    def test_empty_list(self, tmp_path):
        with pytest.raises(ConfigError):
            run_lambda_sweep(spec(tmp_path, lambdas=()))

    def test_needs_reg(self, tmp_path):
        with pytest.raises(ConfigError):
            run_lambda_sweep(spec(tmp_path, regime="freeze"))


class TestAblation:
    def test_five_rows(self, tmp_path):
        rows = run_op_ablation(spec(tmp_path, seeds=(0,), subset=20))
        assert [r.label for r in rows] == [k.value for k in ALTERATIONS] + ["random"]

    def test_needs_reg(self, tmp_path):
        with pytest.raises(ConfigError):
            run_op_ablation(spec(tmp_path, regime="supervised_only"))


def test_summary_from_logs_only(tmp_path):
    s = spec(tmp_path, regime="supervised_only", seeds=(0,))
    run_experiment(s)
    entries = json.loads((tmp_path / "out" / "summary_manifest.json").read_text())
    for e in entries:
        e.pop("wall_clock")
    assert summarize(entries)[0].acc_mean == run_experiment(s)[0].acc_mean
