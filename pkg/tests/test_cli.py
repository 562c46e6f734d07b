import json
import re
import tomllib
from pathlib import Path

import pandas as pd
import pytest
from typer.testing import CliRunner

from ood_lab.cli import app
from ood_lab.core.config import save_config
from ood_lab.core.presets import PRESETS

runner = CliRunner()


@pytest.fixture
def ce_file(tmp_path, ce_config):
    return save_config(ce_config, tmp_path / "ce.json")


@pytest.fixture
def prototype_file(tmp_path, prototype_config):
    return save_config(prototype_config, tmp_path / "prototype.json")


def error_line(result) -> dict:
    lines = [line for line in result.stderr.splitlines() if line.startswith('{"error"')]
    assert lines, result.output
    return json.loads(lines[-1])


def test_version():
    result = runner.invoke(app, ["version"])
    assert result.exit_code == 0
    assert "ood-lab version" in result.stdout


class TestPresets:
    def test_lists_every_preset(self):
        result = runner.invoke(app, ["presets"])
        assert result.exit_code == 0
        assert "Total: 12 presets" in result.stdout

    def test_show_prints_config_json(self):
        result = runner.invoke(app, ["presets", "--show", "cifar10-analog/prototype"])
        assert result.exit_code == 0
        payload = json.loads(result.stdout)
        assert payload["objective"]["kind"] == "prototype"
        assert payload["objective"]["lambda"] == 0.01
        assert "cifar10-analog/prototype" in PRESETS

    def test_show_unknown(self):
        result = runner.invoke(app, ["presets", "--show", "imagenet/ce"])
        assert result.exit_code == 2


class TestErrors:
    def test_missing_config_file(self, tmp_path):
        result = runner.invoke(app, ["run", "--config", str(tmp_path / "nope.json")])
        assert result.exit_code == 2
        record = error_line(result)
        assert record["error"] == "ConfigurationError"
        assert record["command"] == "run"

    def test_unknown_preset(self, tmp_path):
        result = runner.invoke(app, ["run", "--preset", "cifar10/ce", "--out", str(tmp_path)])
        assert result.exit_code == 2
        assert "unknown preset" in error_line(result)["message"]

    def test_neither_config_nor_preset(self, tmp_path):
        result = runner.invoke(app, ["train", "--out", str(tmp_path)])
        assert result.exit_code == 2
        assert error_line(result)["command"] == "train"

    def test_eval_before_score(self, tmp_path, ce_file):
        out = tmp_path / "runs"
        assert runner.invoke(app, ["train", "-c", str(ce_file), "-o", str(out)]).exit_code == 0
        result = runner.invoke(app, ["eval", "-c", str(ce_file), "-o", str(out)])
        assert result.exit_code == 1
        assert error_line(result)["error"] == "InvalidStateError"

    def test_report_without_runs(self, tmp_path):
        result = runner.invoke(app, ["report", "--out", str(tmp_path / "empty")])
        assert result.exit_code == 1
        assert error_line(result)["command"] == "report"


class TestWorkflow:
    def test_run(self, tmp_path, ce_file, ce_config):
        out = tmp_path / "runs"
        result = runner.invoke(app, ["run", "-c", str(ce_file), "-o", str(out), "--runs", "1"])
        assert result.exit_code == 0, result.output
        assert (out / ce_config.name / "run_0" / "metrics.json").exists()
        assert not (out / ce_config.name / "run_1").exists()
        assert (out / "runs.db").exists()

    def test_staged_commands_match_run(self, tmp_path, ce_file, ce_config):
        staged, full = tmp_path / "staged", tmp_path / "full"
        for command in ["train", "score", "eval"]:
            result = runner.invoke(app, [command, "-c", str(ce_file), "-o", str(staged)])
            assert result.exit_code == 0, result.output
        assert runner.invoke(app, ["run", "-c", str(ce_file), "-o", str(full)]).exit_code == 0
        for name in ["metrics.json", "metrics.csv"]:
            left = (staged / ce_config.name / name).read_bytes()
            right = (full / ce_config.name / name).read_bytes()
            assert left == right

    def test_gen_data_writes_five_files(self, tmp_path, ce_file, ce_config):
        out = tmp_path / "runs"
        result = runner.invoke(app, ["gen-data", "-c", str(ce_file), "-o", str(out), "--run", "1"])
        assert result.exit_code == 0, result.output
        target = out / ce_config.name / "data" / "run_1"
        sizes = {p.stem: len(pd.read_csv(p)) for p in target.glob("*.csv")}
        assert sizes == {"id_train": 160, "id_val": 20, "id_test": 60, "near_ood": 30, "far_ood": 30}

    def test_export_embeddings(self, tmp_path, prototype_file, prototype_config):
        out = tmp_path / "runs"
        runner.invoke(app, ["train", "-c", str(prototype_file), "-o", str(out), "--runs", "1"])
        target = tmp_path / "emb.csv"
        result = runner.invoke(
            app, ["export-embeddings", "-c", str(prototype_file), "-o", str(out), "--output", str(target)]
        )
        assert result.exit_code == 0, result.output
        table = pd.read_csv(target)
        assert len(table) == 60 + 30 + 30
        assert list(table.columns)[-2:] == ["role", "label"]

    def test_compare_and_report(self, tmp_path, ce_file, prototype_file):
        out = tmp_path / "runs"
        result = runner.invoke(
            app, ["compare", "-c", str(ce_file), "-c", str(prototype_file), "-o", str(out)]
        )
        assert result.exit_code == 0, result.output
        written = (out / "comparison" / "report.md").read_bytes()

        result = runner.invoke(app, ["report", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "comparison" / "report.json").exists()
        assert b"Near-OOD AUROC" in written

    def test_compare_rejects_family_with_configs(self, tmp_path, ce_file):
        result = runner.invoke(
            app, ["compare", "-c", str(ce_file), "--family", "cifar10-analog", "-o", str(tmp_path)]
        )
        assert result.exit_code == 2
        assert error_line(result)["command"] == "compare"


class TestSelectScorer:
    def test_ranks_rules_of_trained_runs(self, tmp_path, prototype_file):
        out = tmp_path / "runs"
        assert runner.invoke(app, ["train", "-c", str(prototype_file), "-o", str(out)]).exit_code == 0
        result = runner.invoke(app, ["select-scorer", "-c", str(prototype_file), "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert "Validation AUROC" in result.stdout
        assert "Best rule:" in result.stdout
        assert "knn" in result.stdout

    def test_without_trained_runs(self, tmp_path, ce_file):
        result = runner.invoke(app, ["select-scorer", "-c", str(ce_file), "-o", str(tmp_path)])
        assert result.exit_code == 1
        assert error_line(result)["command"] == "select-scorer"


def test_directly_imported_packages_are_declared():
    manifest = tomllib.loads((Path(__file__).parents[1] / "pyproject.toml").read_text())
    declared = {re.split(r"[<>=!~ \[]", dep, maxsplit=1)[0] for dep in manifest["project"]["dependencies"]}
    assert {"click", "pydantic", "typer", "rich", "sqlmodel"} <= declared
