import dataclasses
import json

import pytest

from halludet.classifier import ClassifierConfig
from halludet.config import BackendConfig, RunConfig, config_hash, load_config
from halludet.dataset import load_dataset
from halludet.errors import ConfigError, DataError
from halludet.llm import MockCompletionClient, MockEmbeddingClient
from halludet.pipeline import (
    StudySettings,
    SweepGrid,
    classify_dataset,
    load_predictions,
    make_clients,
    run_ablation_study,
    run_classify,
    run_evaluate,
    run_stage1,
    run_sweep_study,
)
from halludet.selection import load_pools


@pytest.fixture
def cfg(tmp_path):
    return RunConfig(
        backend=BackendConfig(kind="mock", seed=7, embedding_dim=16),
        classifier=ClassifierConfig(temperature=1.0, samples_per_query=5, examples_per_label=1, seed=3),
        selection=dataclasses.replace(RunConfig().selection, pool_sample_size=8, k=3, seed=3),
        output_dir=str(tmp_path / "runs"),
        cache_dir=str(tmp_path / "cache"),
        figures=False,
    )


class TestMakeClients:
    def test_mock_kind(self, cfg):
        completion, embedding, is_mock = make_clients(cfg)
        assert is_mock
        assert isinstance(completion, MockCompletionClient)
        assert isinstance(embedding, MockEmbeddingClient)

    def test_http_without_key_falls_back_to_mock(self, cfg, monkeypatch, caplog):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        http_cfg = dataclasses.replace(cfg, backend=dataclasses.replace(cfg.backend, kind="http"))
        with caplog.at_level("WARNING"):
            completion, _, is_mock = make_clients(http_cfg)
        assert is_mock
        assert isinstance(completion, MockCompletionClient)
        assert "MOCK MODE" in caplog.text

    def test_per_point_rate_varies(self, cfg, defs):
        from conftest import make_point
        from halludet.dataset import TaskType
        from halludet.prompting import render_zero_shot

        completion, _, _ = make_clients(cfg)
        rates = set()
        for i in range(8):
            bundle = render_zero_shot(make_point(TaskType.MACHINE_TRANSLATION, i), defs)
            replies = [
                completion.complete(bundle, 1.0, seed=s, sample_index=0) for s in range(30)
            ]
            rates.add(sum(1 for r in replies if r == "Hallucination") / 30)
        assert len(rates) > 1


class TestStage1AndClassify:
    def test_stage1_writes_pools_and_summary(self, cfg, unlabeled_file):
        pools_path = run_stage1(cfg, unlabeled_file)
        artifact = load_pools(pools_path)
        assert len(artifact.pools) == 8  # 4 tasks x 2 labels
        assert artifact.config_hash == config_hash(cfg)
        summary = json.loads(
            (pools_path.parent / "stage1_summary.json").read_text()
        )
        assert summary["config_hash"] == config_hash(cfg)
        assert summary["mock_backend"] is True
        assert sum(summary["pool_sizes"].values()) == 8 * 4

    def test_classify_writes_predictions(self, cfg, unlabeled_file, validation_file):
        pools_path = run_stage1(cfg, unlabeled_file)
        predictions_path, run = run_classify(
            cfg,
            validation_file,
            split="validation",
            track="model-agnostic",
            pools_path=pools_path,
        )
        rows = [
            json.loads(line)
            for line in predictions_path.read_text().splitlines()
            if line.strip()
        ]
        ds = load_dataset(validation_file, cfg.mapping, split="validation", track="model-agnostic")
        assert len(rows) == len(ds)
        for row in rows:
            assert row["config_hash"] == config_hash(cfg)
            assert row["label"] in ("Hallucination", "Not Hallucination")
            assert 0.0 <= row["p(Hallucination)"] <= 1.0
            assert len(row["samples"]) == cfg.classifier.samples_per_query
        meta = json.loads(
            (predictions_path.parent / "predictions.meta.json").read_text()
        )
        assert meta["dataset_sha256"] == ds.source_sha256

    def test_zero_shot_needs_no_pools(self, cfg, validation_file):
        zero_cfg = dataclasses.replace(
            cfg, classifier=dataclasses.replace(cfg.classifier, examples_per_label=0)
        )
        predictions_path, run = run_classify(
            zero_cfg, validation_file, split="validation", track="model-agnostic"
        )
        assert predictions_path.exists()
        assert len(run.per_point) > 0

    def test_examples_without_pools_rejected(self, cfg, validation_file):
        with pytest.raises(ConfigError):
            run_classify(cfg, validation_file, split="validation", track="model-agnostic")

    def test_predictions_round_trip(self, cfg, validation_file):
        zero_cfg = dataclasses.replace(
            cfg, classifier=dataclasses.replace(cfg.classifier, examples_per_label=0)
        )
        predictions_path, run = run_classify(
            zero_cfg, validation_file, split="validation", track="model-agnostic"
        )
        loaded, meta = load_predictions(predictions_path)
        assert loaded.config_hash == config_hash(zero_cfg)
        assert set(loaded.per_point) == set(run.per_point)
        for point_id, original in run.per_point.items():
            rebuilt = loaded.per_point[point_id]
            assert rebuilt.label is original.label
            assert rebuilt.probability == original.probability
            assert rebuilt.valid_sample_count == original.valid_sample_count
            assert rebuilt.positive_count == original.positive_count

    def test_same_seed_runs_are_bit_identical(self, cfg, unlabeled_file, validation_file, tmp_path):
        pools_path = run_stage1(cfg, unlabeled_file)
        a, _ = run_classify(
            cfg, validation_file, split="validation", track="model-agnostic",
            pools_path=pools_path, run_dir=tmp_path / "a",
        )
        b, _ = run_classify(
            cfg, validation_file, split="validation", track="model-agnostic",
            pools_path=pools_path, run_dir=tmp_path / "b",
        )
        assert a.read_bytes() == b.read_bytes()


class TestEvaluateCommand:
    def _predict(self, cfg, validation_file):
        zero_cfg = dataclasses.replace(
            cfg, classifier=dataclasses.replace(cfg.classifier, examples_per_label=0)
        )
        return zero_cfg, run_classify(
            zero_cfg, validation_file, split="validation", track="model-agnostic"
        )[0]

    def test_report_written(self, cfg, validation_file):
        zero_cfg, predictions_path = self._predict(cfg, validation_file)
        report, run_dir = run_evaluate(
            zero_cfg, predictions_path, validation_file,
            split="validation", track="model-agnostic",
        )
        assert (run_dir / "report.json").exists()
        assert (run_dir / "report.csv").exists()
        assert (run_dir / "stratified.csv").exists()
        payload = json.loads((run_dir / "report.json").read_text())
        assert payload["n"] == report.n

    def test_dataset_hash_mismatch_refused(self, cfg, validation_file, tmp_path):
        zero_cfg, predictions_path = self._predict(cfg, validation_file)
        other = tmp_path / "other.json"
        records = json.loads(validation_file.read_text())
        other.write_text(json.dumps(records[:-1]))
        with pytest.raises(DataError, match="--force"):
            run_evaluate(
                zero_cfg, predictions_path, other,
                split="validation", track="model-agnostic",
            )

    def test_force_overrides_mismatch(self, cfg, validation_file, tmp_path):
        zero_cfg, predictions_path = self._predict(cfg, validation_file)
        other = tmp_path / "other.json"
        records = json.loads(validation_file.read_text())
        other.write_text(json.dumps(records[:-1]))
        report, _ = run_evaluate(
            zero_cfg, predictions_path, other,
            split="validation", track="model-agnostic", force=True,
        )
        assert report.n == len(records) - 1

    def test_figures_rendered_when_enabled(self, cfg, validation_file):
        zero_cfg, predictions_path = self._predict(cfg, validation_file)
        fig_cfg = dataclasses.replace(zero_cfg, figures=True)
        _, run_dir = run_evaluate(
            fig_cfg, predictions_path, validation_file,
            split="validation", track="model-agnostic",
        )
        assert (run_dir / "stratified.png").stat().st_size > 0
        assert (run_dir / "probability_scatter.png").stat().st_size > 0


class TestStudies:
    def _load(self, cfg, validation_file):
        return load_dataset(validation_file, cfg.mapping, split="validation", track="model-agnostic")

    def test_ablation_rows_and_means(self, cfg, unlabeled_file, validation_file):
        pools = load_pools(run_stage1(cfg, unlabeled_file))
        ds = self._load(cfg, validation_file)
        completion, _, _ = make_clients(cfg)
        rows = run_ablation_study(
            ds, pools, cfg.prompts.definition_set(), completion,
            StudySettings(passes=3),
        )
        per_pass = [r for r in rows if r["pass"] != "mean"]
        means = [r for r in rows if r["pass"] == "mean"]
        assert len(per_pass) == 5 * 3
        assert [m["variant"] for m in means] == [
            "full",
            "no_examples",
            "no_task_definition",
            "no_role_definition",
            "no_concept_definition",
        ]

    def test_mock_is_prompt_invariant_across_variants(self, cfg, unlabeled_file, validation_file):
        """Ablation plumbing must not introduce variance on its own."""
        pools = load_pools(run_stage1(cfg, unlabeled_file))
        ds = self._load(cfg, validation_file)
        completion, _, _ = make_clients(cfg)
        rows = run_ablation_study(
            ds, pools, cfg.prompts.definition_set(), completion,
            StudySettings(passes=2),
        )
        by_variant = {}
        for row in rows:
            if row["pass"] == "mean":
                continue
            by_variant.setdefault(row["variant"], []).append(
                (row["pass"], row["accuracy"], row["spearman_rho"])
            )
        baseline = by_variant["full"]
        for variant, values in by_variant.items():
            assert values == baseline, variant

    def test_sweep_single_cell_deterministic(self, cfg, validation_file):
        ds = self._load(cfg, validation_file)
        completion, _, _ = make_clients(cfg)
        grid = SweepGrid(temperatures=(1.0,), examples_per_label=(0,), samples_per_query=(5,))
        rows1 = run_sweep_study(ds, None, cfg.prompts.definition_set(), completion, grid, passes=1)
        rows2 = run_sweep_study(ds, None, cfg.prompts.definition_set(), completion, grid, passes=1)
        assert rows1 == rows2
        assert len(rows1) == 2  # one pass row + one mean row

    def test_sweep_checkpoint_resume_skips_done_cells(self, cfg, validation_file, tmp_path):
        ds = self._load(cfg, validation_file)
        completion, _, _ = make_clients(cfg)
        grid = SweepGrid(temperatures=(0.5, 1.0), examples_per_label=(0,), samples_per_query=(5,))
        checkpoint = tmp_path / "checkpoint.json"
        rows = run_sweep_study(
            ds, None, cfg.prompts.definition_set(), completion, grid,
            passes=2, run_config_hash="h1", checkpoint_path=checkpoint,
        )
        calls_after_first = completion.call_count
        rows_again = run_sweep_study(
            ds, None, cfg.prompts.definition_set(), completion, grid,
            passes=2, run_config_hash="h1", checkpoint_path=checkpoint,
        )
        assert completion.call_count == calls_after_first  # everything reused
        assert rows_again == rows

    def test_sweep_checkpoint_ignored_on_config_change(self, cfg, validation_file, tmp_path):
        ds = self._load(cfg, validation_file)
        completion, _, _ = make_clients(cfg)
        grid = SweepGrid(temperatures=(1.0,), examples_per_label=(0,), samples_per_query=(5,))
        checkpoint = tmp_path / "checkpoint.json"
        run_sweep_study(
            ds, None, cfg.prompts.definition_set(), completion, grid,
            passes=1, run_config_hash="h1", checkpoint_path=checkpoint,
        )
        before = completion.call_count
        run_sweep_study(
            ds, None, cfg.prompts.definition_set(), completion, grid,
            passes=1, run_config_hash="h2", checkpoint_path=checkpoint,
        )
        assert completion.call_count > before


class TestConfigFile:
    def test_load_and_hash_stability(self, tmp_path):
        config_text = """
backend:
  kind: mock
  seed: 11
classifier:
  temperature: 1.0
  samples_per_query: 5
selection:
  k: 3
output_dir: out
"""
        path = tmp_path / "run.yaml"
        path.write_text(config_text)
        cfg = load_config(path)
        assert cfg.backend.seed == 11
        assert cfg.classifier.samples_per_query == 5
        assert cfg.selection.k == 3
        assert cfg.output_dir == "out"
        # hash ignores output locations
        assert config_hash(cfg) == config_hash(dataclasses.replace(cfg, output_dir="elsewhere"))
        assert config_hash(cfg) != config_hash(
            dataclasses.replace(cfg, classifier=dataclasses.replace(cfg.classifier, seed=99))
        )

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("classifer:\n  temperature: 1.0\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_nested_key_rejected(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("classifier:\n  temp: 1.0\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")

    def test_prompt_overrides_flow_into_definitions(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(
            "prompts:\n"
            "  concept_definition: custom concept\n"
            "  role_definitions:\n"
            "    DM: custom DM role\n"
        )
        cfg = load_config(path)
        defs = cfg.prompts.definition_set()
        from halludet.dataset import TaskType

        assert defs.concept_definition == "custom concept"
        assert defs.role_for(TaskType.DEFINITION_MODELING) == "custom DM role"
        assert "author" in defs.role_for(TaskType.PARAPHRASE_GENERATION)
