"""Experiment harness: config handling, persistence, comparisons, CLI."""

import dataclasses
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from missaug import cli, harness
from missaug.errors import ConfigError, LoadError
from missaug.metrics import ScoreReport
from missaug.training import LossCurve


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("toydata")
    rng = np.random.default_rng(42)
    csv_path = root / "toy.csv"
    lines = ["f0,f1,f2,f3"]
    for row in rng.random((14, 4)):
        lines.append(",".join(f"{v:.6f}" for v in row))
    csv_path.write_text("\n".join(lines) + "\n")
    schema_path = root / "toy.schema.json"
    schema_path.write_text(json.dumps({"label": None, "categorical": []}))
    return str(csv_path), str(schema_path)


@pytest.fixture
def tiny_config(toy_files, tmp_path):
    csv_path, schema_path = toy_files

    def make(**overrides):
        base = dict(dataset_path=csv_path, schema_path=schema_path,
                    model="dae", mechanism="mcar", rate=0.5, repeats=1,
                    folds=2, seed=7, epochs=2, out_dir=str(tmp_path / "out"))
        base.update(overrides)
        return harness.ExperimentConfig(**base)

    return make


class TestExperimentConfig:
    def test_defaults_round_trip_json(self, tiny_config, tmp_path):
        config = tiny_config()
        path = tmp_path / "config.json"
        config.to_json(path)
        assert harness.ExperimentConfig.from_json(path) == config

    @pytest.mark.parametrize("field,value", [
        ("model", "vae"), ("mechanism", "fancy"), ("rate", 0.0),
        ("rate", 1.0), ("observed_fraction", 0.0), ("repeats", 0),
        ("folds", 1), ("alpha", -1.0), ("alpha", "grid"), ("epochs", 0),
        ("batch_size", 0), ("lr", 0.0),
    ])
    def test_rejects_bad_values(self, tiny_config, field, value):
        with pytest.raises(ConfigError):
            tiny_config(**{field: value})

    def test_from_dict_rejects_unknown_fields(self, tiny_config):
        raw = tiny_config().to_dict()
        raw["optimizer"] = "sgd"
        with pytest.raises(ConfigError, match="optimizer"):
            harness.ExperimentConfig.from_dict(raw)

    def test_from_dict_requires_paths(self):
        with pytest.raises(ConfigError):
            harness.ExperimentConfig.from_dict({"model": "dae"})

    def test_run_id_ignores_out_dir_only(self, tiny_config):
        config = tiny_config()
        same = dataclasses.replace(config, out_dir="elsewhere")
        other = dataclasses.replace(config, alpha=3.0)
        assert config.run_id() == same.run_id()
        assert config.run_id() != other.run_id()
        assert len(config.run_id()) == 12

    def test_auto_alpha_is_accepted(self, tiny_config):
        assert tiny_config(misa=True, alpha="auto").alpha == "auto"


class TestRun:
    def test_writes_both_artifacts(self, tiny_config):
        result = harness.run(tiny_config())
        assert os.path.exists(result.results_path)
        assert os.path.exists(result.losses_path)
        payload = json.loads(Path(result.results_path).read_text())
        assert payload["config"] == result.config.to_dict()
        assert payload["report"] == result.report.to_dict()
        assert payload["run_id"] == result.run_id
        assert payload["artifacts"] == {"losses": "losses.csv"}
        curve = LossCurve.load_csv(result.losses_path)
        assert curve.rows == result.report.sample_curve.rows

    def test_rerun_is_identical_up_to_wall_clock(self, tiny_config):
        config = tiny_config()
        first = Path(harness.run(config).results_path).read_text()
        second = Path(harness.run(config).results_path).read_text()
        view = lambda text: json.dumps(
            harness.stable_view(json.loads(text)), sort_keys=True)
        assert view(first) == view(second)
        volatile = set(json.loads(first)) - set(
            harness.stable_view(json.loads(first)))
        assert volatile == set(harness.VOLATILE_KEYS)

    def test_missing_input_file_is_rejected(self, tiny_config):
        config = tiny_config()
        config = dataclasses.replace(config, dataset_path="absent.csv")
        with pytest.raises(ConfigError, match="absent.csv"):
            harness.run(config)

    def test_stage_name_reaches_the_error(self, tiny_config, tmp_path):
        bad_csv = tmp_path / "bad.csv"
        bad_csv.write_text("f0,f1\n1.0\n")  # ragged row
        config = tiny_config(dataset_path=str(bad_csv))
        with pytest.raises(LoadError, match="load-data"):
            harness.run(config)
        assert not (Path(config.out_dir) / f"run-{config.run_id()}").exists()

    def test_failed_persist_leaves_nothing(self, tiny_config, monkeypatch):
        config = tiny_config()
        real = harness._atomic_write

        def flaky(path, write_fn):
            if path.endswith("results.json"):
                raise RuntimeError("disk full")
            real(path, write_fn)

        monkeypatch.setattr(harness, "_atomic_write", flaky)
        with pytest.raises(RuntimeError, match="persist: disk full"):
            harness.run(config)
        run_dir = Path(config.out_dir) / f"run-{config.run_id()}"
        assert list(run_dir.iterdir()) == []

    def test_atomic_write_cleans_its_temp(self, tmp_path):
        target = tmp_path / "out.txt"

        def boom(tmp):
            Path(tmp).write_text("partial")
            raise RuntimeError("boom")

        with pytest.raises(RuntimeError):
            harness._atomic_write(str(target), boom)
        assert list(tmp_path.iterdir()) == []

    def test_load_result_round_trips(self, tiny_config):
        result = harness.run(tiny_config(misa=True, alpha=2.0))
        loaded = harness.load_result(result.results_path)
        assert loaded.config == result.config
        assert loaded.report.to_dict() == result.report.to_dict()
        assert loaded.run_id == result.run_id
        assert os.path.exists(loaded.losses_path)


def result_with(mean, std, metric="rmse", model="gain"):
    config = harness.ExperimentConfig.__new__(harness.ExperimentConfig)
    object.__setattr__(config, "model", model)
    report = ScoreReport(metric=metric, mean=mean, std=std)
    return harness.ExperimentResult(config=config, report=report,
                                    run_id="x", version="0", wall_seconds=0.0,
                                    results_path="", losses_path="")


class TestCompare:
    def test_identical_results_show_zero_improvement(self):
        res = result_with(0.3, 0.01)
        assert harness.compare(res, res).improvement_pct == 0.0

    def test_known_pair_improves_about_twelve_percent(self):
        pair = harness.compare(result_with(0.2476, 0.0),
                               result_with(0.2170, 0.0))
        assert pair.improvement_pct == pytest.approx(12.36, abs=0.05)

    def test_rows_are_model_and_model_plus(self):
        pair = harness.compare(result_with(0.3, 0.02),
                               result_with(0.2, 0.01))
        rows = pair.rows()
        assert [r["model"] for r in rows] == ["gain", "gain+"]
        assert rows[0]["improvement_pct"] is None

    def test_csv_round_trip_is_lossless(self, tmp_path):
        pair = harness.compare(result_with(1 / 3, 1 / 7),
                               result_with(1 / 9, 1 / 11))
        path = tmp_path / "comparison.csv"
        pair.save_csv(path)
        assert harness.Comparison.load_csv(path) == pair

    def test_metric_mismatch_is_rejected(self):
        with pytest.raises(ConfigError):
            harness.compare(result_with(0.3, 0.0, metric="rmse"),
                            result_with(0.8, 0.0, metric="accuracy"))

    def test_model_mismatch_is_rejected(self):
        with pytest.raises(ConfigError):
            harness.compare(result_with(0.3, 0.0, model="dae"),
                            result_with(0.2, 0.0, model="gain"))

    def test_foreign_csv_is_rejected(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("epoch,l_ori,l_aug,hybrid\n")
        with pytest.raises(ConfigError):
            harness.Comparison.load_csv(path)


class TestSweeps:
    def test_alpha_sweep_rows_and_table(self, tiny_config):
        config = tiny_config()
        rows = harness.sweep_alpha(config, [1.0, 5.0])
        assert [r["model"] for r in rows] == ["dae", "dae+", "dae+"]
        assert [r["alpha"] for r in rows] == [0.0, 1.0, 5.0]
        assert all(r["seed"] == config.seed for r in rows)
        table = Path(config.out_dir) / "alpha_sweep.csv"
        lines = table.read_text().strip().splitlines()
        assert lines[0] == "model,alpha,mean,std,seed"
        assert len(lines) == 4

    def test_empty_alpha_list_gives_baseline_only(self, tiny_config):
        rows = harness.sweep_alpha(tiny_config(), [])
        assert len(rows) == 1 and rows[0]["alpha"] == 0.0

    def test_rate_sweep_rows_and_improvement_math(self, tiny_config):
        config = tiny_config(misa=True, alpha=2.0)
        rows = harness.sweep_missing_rate(config, [0.3, 0.6])
        assert [r["rate"] for r in rows] == [0.3, 0.6]
        for row in rows:
            expected = ((row["baseline_mean"] - row["augmented_mean"])
                        / row["baseline_mean"] * 100.0)
            assert row["improvement_pct"] == pytest.approx(expected)
        assert (Path(config.out_dir) / "rate_sweep.csv").exists()

    def test_rate_sweep_entry_matches_plain_run(self, tiny_config):
        config = tiny_config(misa=True, alpha=2.0)
        rows = harness.sweep_missing_rate(config, [0.5])
        plain = harness.run(dataclasses.replace(config, misa=True, rate=0.5))
        assert rows[0]["augmented_mean"] == plain.report.mean
        base = harness.run(dataclasses.replace(config, misa=False, rate=0.5))
        assert rows[0]["baseline_mean"] == base.report.mean


def run_flags(toy_files, out_dir, *extra):
    csv_path, schema_path = toy_files
    return ["--dataset", csv_path, "--schema", schema_path,
            "--model", "dae", "--mechanism", "mcar", "--rate", "0.5",
            "--repeats", "1", "--folds", "2", "--epochs", "2",
            "--seed", "3", "--out", str(out_dir), *extra]


class TestCli:
    def test_run_then_compare(self, toy_files, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["run", *run_flags(toy_files, out)]) == 0
        assert cli.main(["run", *run_flags(toy_files, out),
                         "--misa", "on", "--alpha", "2"]) == 0
        results = sorted(out.glob("run-*/results.json"))
        assert len(results) == 2
        base = next(p for p in results
                    if not json.loads(p.read_text())["config"]["misa"])
        aug = next(p for p in results
                   if json.loads(p.read_text())["config"]["misa"])
        assert cli.main(["compare", str(base), str(aug),
                         "--out", str(out)]) == 0
        assert (out / "comparison.csv").exists()
        shown = capsys.readouterr().out
        assert "dae+" in shown and "improvement" in shown

    def test_config_file_with_flag_override(self, toy_files, tmp_path):
        csv_path, schema_path = toy_files
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({
            "dataset_path": csv_path, "schema_path": schema_path,
            "rate": 0.4, "repeats": 1, "folds": 2, "epochs": 2,
            "out_dir": str(tmp_path / "out")}))
        assert cli.main(["run", "--config", str(config_path),
                         "--rate", "0.6"]) == 0
        results = list((tmp_path / "out").glob("run-*/results.json"))
        payload = json.loads(results[0].read_text())
        assert payload["config"]["rate"] == 0.6

    def test_sweep_alpha_subcommand(self, toy_files, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["sweep-alpha", *run_flags(toy_files, out),
                         "--alphas", "1,5"]) == 0
        assert (out / "alpha_sweep.csv").exists()

    def test_sweep_rate_subcommand(self, toy_files, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["sweep-rate", *run_flags(toy_files, out),
                         "--rates", "0.4"]) == 0
        assert (out / "rate_sweep.csv").exists()

    def test_missing_dataset_is_a_clean_error(self, tmp_path, capsys):
        code = cli.main(["run", "--model", "dae",
                         "--out", str(tmp_path)])
        assert code == 1
        assert "dataset" in capsys.readouterr().err

    def test_bad_alpha_flag_exits_via_argparse(self, toy_files, tmp_path):
        with pytest.raises(SystemExit):
            cli.main(["run", *run_flags(toy_files, tmp_path),
                      "--alpha", "lots"])

    def test_console_script_entry_point(self, toy_files, tmp_path):
        out = tmp_path / "out"
        proc = subprocess.run(
            [sys.executable, "-m", "missaug.cli", "run",
             *run_flags(toy_files, out)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "rmse" in proc.stdout
        assert list(out.glob("run-*/results.json"))
