import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from halludet.cli import main
from halludet.dataset import Label

from conftest import validation_records


@pytest.fixture
def runner():
    return CliRunner()


def base_args(tmp_path: Path) -> list[str]:
    return [
        "--output-dir",
        str(tmp_path / "runs"),
        "--cache-dir",
        str(tmp_path / "cache"),
        "--seed",
        "7",
    ]


def find_one(root: Path, pattern: str) -> Path:
    matches = list(root.rglob(pattern))
    assert len(matches) == 1, f"{pattern}: {matches}"
    return matches[0]


class TestDumpDefaults:
    def test_contains_role_definition(self, runner):
        result = runner.invoke(main, ["dump-defaults"])
        assert result.exit_code == 0
        assert "You are a lexicographer concerned" in result.output
        assert "template version" in result.output

    def test_json_output(self, runner):
        result = runner.invoke(main, ["dump-defaults", "--json"])
        assert result.exit_code == 0
        payload = json.loads(result.stdout)
        assert "You are a lexicographer concerned" in payload["role_definitions"]["Definition Modeling"]
        assert payload["template_version"]
        assert payload["config_hash"]


class TestIngest:
    def test_normalized_dump_written(self, runner, tmp_path, validation_file):
        out = tmp_path / "normalized.json"
        result = runner.invoke(
            main,
            base_args(tmp_path) + ["ingest", str(validation_file), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        summary = json.loads(result.stdout)
        assert summary["n"] == 24
        assert summary["labeled"] == 24
        assert out.exists()

    def test_bad_file_exits_with_data_code(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        result = runner.invoke(main, base_args(tmp_path) + ["ingest", str(bad)])
        assert result.exit_code == 3
        record = json.loads(result.stderr.strip().splitlines()[-1])
        assert record["error"] == "MalformedFile"
        assert record["exit_code"] == 3


class TestEndToEnd:
    def test_stage1_classify_evaluate(self, runner, tmp_path, unlabeled_file, validation_file):
        args = base_args(tmp_path)
        stage1 = runner.invoke(
            main,
            args
            + [
                "stage1",
                str(unlabeled_file),
                "--pool-sample-size",
                "8",
                "--k",
                "3",
                "--samples-per-query",
                "5",
            ],
        )
        assert stage1.exit_code == 0, stage1.output
        assert "MOCK MODE" in stage1.stderr
        pools_path = Path(stage1.stdout.strip().split("pools: ")[-1])
        assert pools_path.exists()

        classify = runner.invoke(
            main,
            args
            + [
                "classify",
                str(validation_file),
                "--pools",
                str(pools_path),
                "--samples-per-query",
                "5",
            ],
        )
        assert classify.exit_code == 0, classify.output
        predictions_path = Path(classify.stdout.strip().split("predictions: ")[-1])
        rows = [json.loads(l) for l in predictions_path.read_text().splitlines() if l.strip()]
        assert len(rows) == 24

        evaluate = runner.invoke(
            main,
            args + ["evaluate", str(predictions_path), str(validation_file)],
        )
        assert evaluate.exit_code == 0, evaluate.output
        report = json.loads(evaluate.stdout)
        assert report["n"] == 24
        assert 0.0 <= report["accuracy"] <= 1.0
        run_dir = find_one(tmp_path / "runs", "report.json").parent
        assert (run_dir / "stratified.csv").exists()
        assert (run_dir / "stratified.png").exists()

    def test_classify_zero_shot_without_pools(self, runner, tmp_path, validation_file):
        result = runner.invoke(
            main,
            base_args(tmp_path)
            + [
                "classify",
                str(validation_file),
                "--examples-per-label",
                "0",
                "--samples-per-query",
                "5",
            ],
        )
        assert result.exit_code == 0, result.output

    def test_classify_with_examples_but_no_pools_is_config_error(
        self, runner, tmp_path, validation_file
    ):
        result = runner.invoke(
            main,
            base_args(tmp_path) + ["classify", str(validation_file)],
        )
        assert result.exit_code == 2
        record = json.loads(result.stderr.strip().splitlines()[-1])
        assert record["error"] == "ConfigError"

    def test_evaluate_hash_mismatch_refused_then_forced(
        self, runner, tmp_path, validation_file
    ):
        args = base_args(tmp_path)
        classify = runner.invoke(
            main,
            args
            + [
                "classify",
                str(validation_file),
                "--examples-per-label",
                "0",
                "--samples-per-query",
                "5",
            ],
        )
        predictions_path = Path(classify.stdout.strip().split("predictions: ")[-1])
        other = tmp_path / "other.json"
        other.write_text(json.dumps(validation_records(6, seed=11)[:-1]))

        refused = runner.invoke(
            main, args + ["evaluate", str(predictions_path), str(other)]
        )
        assert refused.exit_code == 3
        forced = runner.invoke(
            main, args + ["evaluate", str(predictions_path), str(other), "--force"]
        )
        assert forced.exit_code == 0, forced.output


class TestStudiesCli:
    def test_sweep_writes_table_and_figures(self, runner, tmp_path, validation_file):
        result = runner.invoke(
            main,
            base_args(tmp_path)
            + [
                "sweep",
                str(validation_file),
                "--temperatures",
                "0.5,1.0",
                "--examples-per-label-values",
                "0",
                "--samples-per-query-values",
                "3,5",
                "--passes",
                "2",
            ],
        )
        assert result.exit_code == 0, result.output
        table = find_one(tmp_path / "runs", "sweep.csv")
        lines = table.read_text().splitlines()
        # 2 temps x 1 epl x 2 spq x 2 passes = 8 rows + 4 means + header
        assert len(lines) == 1 + 8 + 4
        assert find_one(tmp_path / "runs", "sweep_temperature.png").stat().st_size > 0
        assert find_one(tmp_path / "runs", "sweep_samples_per_query.png").stat().st_size > 0

    def test_ablate_writes_rows_and_figure(
        self, runner, tmp_path, unlabeled_file, validation_file
    ):
        args = base_args(tmp_path)
        stage1 = runner.invoke(
            main,
            args + ["stage1", str(unlabeled_file), "--pool-sample-size", "6", "--k", "2",
                    "--samples-per-query", "3"],
        )
        pools_path = Path(stage1.stdout.strip().split("pools: ")[-1])
        result = runner.invoke(
            main,
            args
            + [
                "ablate",
                str(validation_file),
                "--pools",
                str(pools_path),
                "--passes",
                "3",
                "--samples-per-query",
                "3",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "ablation rows: 20" in result.output  # 5 variants x 3 passes + 5 means
        table = find_one(tmp_path / "runs", "ablation.csv")
        assert len(table.read_text().splitlines()) == 1 + 20
        assert find_one(tmp_path / "runs", "ablation.png").stat().st_size > 0

    def test_bad_grid_is_config_error(self, runner, tmp_path, validation_file):
        result = runner.invoke(
            main,
            base_args(tmp_path)
            + ["sweep", str(validation_file), "--temperatures", "hot,cold"],
        )
        assert result.exit_code == 2


class TestLabelsWire:
    def test_prediction_labels_are_exact_strings(self, runner, tmp_path, validation_file):
        result = runner.invoke(
            main,
            base_args(tmp_path)
            + [
                "classify",
                str(validation_file),
                "--examples-per-label",
                "0",
                "--samples-per-query",
                "5",
            ],
        )
        predictions_path = Path(result.stdout.strip().split("predictions: ")[-1])
        for line in predictions_path.read_text().splitlines():
            row = json.loads(line)
            assert row["label"] in (lab.value for lab in Label)
