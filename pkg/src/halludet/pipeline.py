"""End-to-end orchestration: pool building, bulk classification, evaluation,
and the hyperparameter/prompt-component studies.

Every command writes into its own run directory (timestamp + config hash)
and stamps artifacts with the producing configuration hash.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .classifier import Classification, ClassifierConfig, classify
from .config import RunConfig, config_hash, short_hash
from .dataset import (
    Dataset,
    dump_dataset,
    load_dataset,
    parse_gold_label,
)
from .errors import ConfigError, DataError
from .evaluation import EvaluationReport, RunResult, evaluate_run
from .llm import (
    CompletionClient,
    CompletionSample,
    CostLedger,
    EmbeddingClient,
    HttpCompletionClient,
    HttpEmbeddingClient,
    MockCompletionClient,
    MockEmbeddingClient,
    ModelConfig,
    ResponseCache,
    parse_label,
    unit_interval_draw,
)
from .prompting import (
    FULL_PROMPT,
    DefinitionSet,
    PromptLayout,
    PromptVariant,
    ablation_sequence,
)
from .selection import (
    PoolsArtifact,
    build_pools,
    examples_for_task,
    load_pools,
    save_pools,
    select_all,
)
from .util import atomic_write_text, derive_seed

logger = logging.getLogger(__name__)

PREDICTIONS_FILE = "predictions.jsonl"
PREDICTIONS_META_FILE = "predictions.meta.json"
POOLS_FILE = "pools.json"


def make_clients(
    cfg: RunConfig, ledger_path: str | Path | None = None
) -> tuple[CompletionClient, EmbeddingClient, bool]:
    """Build (completion, embedding, is_mock) clients for this configuration.

    An http backend without its API key in the environment falls back to the
    seeded mock, loudly, so development and CI never require network access.
    """
    backend = cfg.backend
    kind = backend.kind
    if kind == "http" and backend.api_key_env and not os.environ.get(backend.api_key_env):
        logger.warning(
            "MOCK MODE: environment variable %s is not set; running against the "
            "seeded mock backend, results are synthetic",
            backend.api_key_env,
        )
        kind = "mock"

    if kind == "mock":
        if backend.positive_rate is not None:
            p_true: float | Callable = backend.positive_rate
        else:
            # Stable per-point ground truth derived from the backend seed.
            def p_true(bundle) -> float:
                return unit_interval_draw(backend.seed, "p-true", bundle.point_key)

        completion: CompletionClient = MockCompletionClient(p_true, seed=backend.seed)
        embedding: EmbeddingClient = MockEmbeddingClient(
            backend.embedding_dim, seed=backend.seed
        )
        return completion, embedding, True

    cache = ResponseCache(cfg.cache_dir)
    ledger = CostLedger(
        ledger_path if ledger_path is not None else Path(cfg.output_dir) / "cost_ledger.jsonl",
        input_cost_per_mtok=backend.input_cost_per_mtok,
        output_cost_per_mtok=backend.output_cost_per_mtok,
        budget_usd=cfg.budget_usd,
    )
    shared = dict(
        api_base=backend.api_base,
        api_key_env=backend.api_key_env,
        request_timeout=backend.request_timeout,
        max_retries=backend.max_retries,
        max_concurrency=backend.max_concurrency,
    )
    completion = HttpCompletionClient(
        ModelConfig(model_name=backend.completion_model, **shared),
        cache=cache,
        ledger=ledger,
    )
    embedding = HttpEmbeddingClient(
        ModelConfig(model_name=backend.embedding_model, **shared),
        cache=cache,
        ledger=ledger,
    )
    return completion, embedding, False


def make_run_dir(cfg: RunConfig, command: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run_dir = Path(cfg.output_dir) / f"{stamp}-{command}-{short_hash(cfg)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


# --- ingest -----------------------------------------------------------------

def run_ingest(
    cfg: RunConfig, dataset_path: str | Path, *, split: str, track: str, out: Path
) -> dict:
    ds = load_dataset(dataset_path, cfg.mapping, split=split, track=track)
    dump_dataset(ds, out)
    by_task: dict[str, int] = {}
    for dp in ds.data_points():
        by_task[dp.task.code] = by_task.get(dp.task.code, 0) + 1
    labeled = ds.labeled_points()
    summary = {
        "path": str(dataset_path),
        "dataset_sha256": ds.source_sha256,
        "split": split,
        "track": track,
        "n": len(ds),
        "by_task": by_task,
        "labeled": len(labeled),
        "with_rater_votes": sum(1 for p in labeled if p.rater_labels),
        "unevaluable_gold": sum(1 for p in labeled if p.gold_label is None),
        "normalized_dump": str(out),
    }
    return summary


# --- pool-building stage ----------------------------------------------------

def run_stage1(
    cfg: RunConfig,
    unlabeled_path: str | Path,
    *,
    track: str = "model-agnostic",
    run_dir: Path | None = None,
) -> Path:
    """Pseudo-label per-task samples, select exemplars, persist the artifact."""
    ds = load_dataset(unlabeled_path, cfg.mapping, split="train-unlabeled", track=track)
    run_dir = run_dir if run_dir is not None else make_run_dir(cfg, "stage1")
    run_dir.mkdir(parents=True, exist_ok=True)
    completion, embedding, is_mock = make_clients(cfg, run_dir / "cost_ledger.jsonl")
    defs = cfg.prompts.definition_set()

    pools = build_pools(ds, defs, cfg.classifier, cfg.selection, completion, embedding)
    selections = select_all(pools, cfg.selection)

    pools_path = run_dir / POOLS_FILE
    save_pools(
        pools_path,
        pools,
        selections,
        selection_cfg=cfg.selection,
        config_hash=config_hash(cfg),
    )
    summary = {
        "config_hash": config_hash(cfg),
        "mock_backend": is_mock,
        "unlabeled_path": str(unlabeled_path),
        "dataset_sha256": ds.source_sha256,
        "track": track,
        "pool_sizes": {
            f"{task.code}/{label.value}": len(pool.examples)
            for (task, label), pool in sorted(
                pools.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
            )
        },
        "selected_sizes": {
            f"{task.code}/{label.value}": len(chosen)
            for (task, label), chosen in sorted(
                selections.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
            )
        },
        "pools_path": str(pools_path),
    }
    atomic_write_text(run_dir / "stage1_summary.json", json.dumps(summary, indent=2) + "\n")
    logger.info("pools written to %s", pools_path)
    return pools_path


# --- bulk classification ----------------------------------------------------

def classify_dataset(
    ds: Dataset,
    defs: DefinitionSet,
    classifier_cfg: ClassifierConfig,
    client: CompletionClient,
    *,
    pools: PoolsArtifact | None = None,
    variant: PromptVariant = FULL_PROMPT,
    layout: PromptLayout | None = None,
    run_config_hash: str = "",
    positives_first: bool = True,
    on_point: Callable[[str, Classification], None] | None = None,
) -> RunResult:
    """Classify every point of a dataset; few-shot when pools are supplied."""
    if classifier_cfg.examples_per_label > 0 and pools is None:
        raise ConfigError(
            "examples_per_label > 0 requires a pools artifact; "
            "run stage1 first or set examples_per_label to 0"
        )
    layout = layout if layout is not None else PromptLayout(positives_first=positives_first)
    per_point: dict[str, Classification] = {}
    for dp in ds.data_points():
        if classifier_cfg.examples_per_label > 0 and pools is not None:
            examples = examples_for_task(
                pools,
                dp.task,
                classifier_cfg.examples_per_label,
                positives_first=layout.positives_first,
            )
        else:
            examples = []
        result = classify(
            dp, examples, classifier_cfg, defs, client, variant=variant, layout=layout
        )
        per_point[dp.id] = result
        if on_point is not None:
            on_point(dp.id, result)
    return RunResult(
        config_hash=run_config_hash,
        dataset_sha256=ds.source_sha256,
        per_point=per_point,
    )


def prediction_record(point_id: str, task_code: str, c: Classification, cfg_hash: str) -> dict:
    return {
        "id": point_id,
        "task": task_code,
        "label": c.label.value,
        "p(Hallucination)": c.probability,
        "positive_count": c.positive_count,
        "valid_sample_count": c.valid_sample_count,
        "samples": [s.raw_text for s in c.samples],
        "config_hash": cfg_hash,
    }


def run_classify(
    cfg: RunConfig,
    dataset_path: str | Path,
    *,
    split: str,
    track: str,
    pools_path: str | Path | None = None,
    run_dir: Path | None = None,
) -> tuple[Path, RunResult]:
    """Classify one split and write per-point JSON-lines predictions."""
    ds = load_dataset(dataset_path, cfg.mapping, split=split, track=track)
    run_dir = run_dir if run_dir is not None else make_run_dir(cfg, "classify")
    run_dir.mkdir(parents=True, exist_ok=True)
    completion, _, is_mock = make_clients(cfg, run_dir / "cost_ledger.jsonl")
    defs = cfg.prompts.definition_set()

    pools = None
    if cfg.classifier.examples_per_label > 0:
        if pools_path is None:
            raise ConfigError(
                "examples_per_label > 0 requires --pools (or examples_per_label 0 "
                "for zero-shot)"
            )
        pools = load_pools(pools_path)

    cfg_hash = config_hash(cfg)
    task_codes = {dp.id: dp.task.code for dp in ds.data_points()}
    predictions_path = run_dir / PREDICTIONS_FILE
    with open(predictions_path, "w", encoding="utf-8") as sink:

        def on_point(point_id: str, c: Classification) -> None:
            row = prediction_record(point_id, task_codes[point_id], c, cfg_hash)
            sink.write(json.dumps(row, ensure_ascii=False) + "\n")

        run = classify_dataset(
            ds,
            defs,
            cfg.classifier,
            completion,
            pools=pools,
            run_config_hash=cfg_hash,
            positives_first=cfg.prompts.positives_first,
            layout=cfg.prompts.layout(),
            on_point=on_point,
        )

    meta = {
        "config_hash": cfg_hash,
        "dataset_sha256": ds.source_sha256,
        "dataset_path": str(dataset_path),
        "split": split,
        "track": track,
        "n": len(ds),
        "mock_backend": is_mock,
        "temperature": cfg.classifier.temperature,
        "samples_per_query": cfg.classifier.samples_per_query,
        "examples_per_label": cfg.classifier.examples_per_label,
        "pools_path": None if pools_path is None else str(pools_path),
        "pools_config_hash": None if pools is None else pools.config_hash,
    }
    atomic_write_text(run_dir / PREDICTIONS_META_FILE, json.dumps(meta, indent=2) + "\n")
    logger.info("predictions written to %s", predictions_path)
    return predictions_path, run


def load_predictions(path: str | Path) -> tuple[RunResult, dict]:
    """Rebuild a RunResult (and its meta, when present) from disk."""
    path = Path(path)
    per_point: dict[str, Classification] = {}
    cfg_hash = ""
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        samples = tuple(
            CompletionSample(
                raw_text=text,
                parsed=parse_label(text),
                temperature=-1.0,  # not persisted per sample
                sample_index=i,
            )
            for i, text in enumerate(row.get("samples", []))
        )
        per_point[row["id"]] = Classification(
            label=parse_gold_label(row["label"]),
            probability=float(row["p(Hallucination)"]),
            samples=samples,
            valid_sample_count=int(row["valid_sample_count"]),
            positive_count=int(row.get("positive_count", -1)),
        )
        cfg_hash = row.get("config_hash", cfg_hash)

    meta_path = path.with_name(PREDICTIONS_META_FILE)
    meta = {}
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    dataset_sha = meta.get("dataset_sha256")
    return RunResult(config_hash=cfg_hash, dataset_sha256=dataset_sha, per_point=per_point), meta


# --- evaluation -------------------------------------------------------------

def run_evaluate(
    cfg: RunConfig,
    predictions_path: str | Path,
    dataset_path: str | Path,
    *,
    split: str,
    track: str,
    force: bool = False,
    rho_source: str = "file",
    run_dir: Path | None = None,
) -> tuple[EvaluationReport, Path]:
    run, meta = load_predictions(predictions_path)
    ds = load_dataset(dataset_path, cfg.mapping, split=split, track=track)
    if run.dataset_sha256 and ds.source_sha256 and run.dataset_sha256 != ds.source_sha256:
        message = (
            f"predictions were produced against dataset {run.dataset_sha256[:12]}, "
            f"but {dataset_path} hashes to {ds.source_sha256[:12]}"
        )
        if not force:
            raise DataError(message + " (pass --force to evaluate anyway)")
        logger.warning("%s; continuing under --force", message)

    report = evaluate_run(run, ds, rho_source=rho_source)
    run_dir = run_dir if run_dir is not None else make_run_dir(cfg, "evaluate")
    run_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["predictions_path"] = str(predictions_path)
    payload["dataset_path"] = str(dataset_path)
    payload["rho_source"] = rho_source
    atomic_write_text(run_dir / "report.json", json.dumps(payload, indent=2) + "\n")

    from . import reporting

    reporting.write_report_csv(run_dir / "report.csv", report)
    if report.stratified is not None:
        reporting.write_stratified_csv(run_dir / "stratified.csv", report.stratified)
    if cfg.figures:
        reporting.render_evaluation_figures(run_dir, report, run, ds)
    return report, run_dir


# --- studies ----------------------------------------------------------------

@dataclass(frozen=True)
class StudySettings:
    """Shared defaults for the sweep and component-removal studies."""

    temperature: float = 1.0
    samples_per_query: int = 5
    examples_per_label: int = 1
    passes: int = 3
    seed: int = 0


@dataclass(frozen=True)
class SweepGrid:
    temperatures: tuple[float, ...] = (1.0,)
    examples_per_label: tuple[int, ...] = (1,)
    samples_per_query: tuple[int, ...] = (5,)


def _mean_rows(
    rows: list[dict], group_key: Callable[[dict], tuple], static: Sequence[str]
) -> list[dict]:
    """One aggregate row per group: mean plus min/max band per metric."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(group_key(row), []).append(row)
    aggregates = []
    for _, members in groups.items():
        agg = {name: members[0][name] for name in static}
        agg["pass"] = "mean"
        agg["n"] = members[0]["n"]
        for metric in ("accuracy", "spearman_rho"):
            values = [m[metric] for m in members if m[metric] is not None]
            agg[metric] = sum(values) / len(values) if values else None
            agg[f"{metric}_min"] = min(values) if values else None
            agg[f"{metric}_max"] = max(values) if values else None
        aggregates.append(agg)
    return aggregates


def run_ablation_study(
    ds: Dataset,
    pools: PoolsArtifact | None,
    defs: DefinitionSet,
    client: CompletionClient,
    settings: StudySettings = StudySettings(),
    *,
    layout: PromptLayout | None = None,
    rho_source: str = "file",
    run_config_hash: str = "",
) -> list[dict]:
    """Cumulative prompt-component removal: full, then -examples, -task
    definition, -role definition, -concept definition; ``passes`` repetitions
    each, plus one mean row per variant."""
    rows: list[dict] = []
    for variant in ablation_sequence():
        examples_per_label = settings.examples_per_label if variant.include_examples else 0
        for pass_index in range(settings.passes):
            cfg = ClassifierConfig(
                temperature=settings.temperature,
                samples_per_query=settings.samples_per_query,
                examples_per_label=examples_per_label,
                seed=derive_seed(settings.seed, "ablation", pass_index),
            )
            run = classify_dataset(
                ds,
                defs,
                cfg,
                client,
                pools=pools,
                variant=variant,
                layout=layout,
                run_config_hash=run_config_hash,
            )
            report = evaluate_run(run, ds, rho_source=rho_source)
            rows.append(
                {
                    "variant": variant.name,
                    "pass": pass_index,
                    "seed": cfg.seed,
                    "n": report.n,
                    "accuracy": report.accuracy,
                    "spearman_rho": report.spearman_rho,
                }
            )
    rows += _mean_rows(rows, lambda r: (r["variant"],), ("variant",))
    return rows


def run_sweep_study(
    ds: Dataset,
    pools: PoolsArtifact | None,
    defs: DefinitionSet,
    client: CompletionClient,
    grid: SweepGrid,
    *,
    passes: int = 3,
    seed: int = 0,
    layout: PromptLayout | None = None,
    rho_source: str = "file",
    run_config_hash: str = "",
    checkpoint_path: str | Path | None = None,
) -> list[dict]:
    """Full factorial over the grid with ``passes`` seeded repetitions per cell.

    Completed (cell, pass) rows found in the checkpoint are reused, so an
    interrupted sweep resumes where it stopped; checkpoint writes are atomic.
    """
    completed: dict[tuple, dict] = {}
    if checkpoint_path is not None and Path(checkpoint_path).exists():
        stored = json.loads(Path(checkpoint_path).read_text(encoding="utf-8"))
        if stored.get("config_hash") == run_config_hash:
            for row in stored.get("rows", []):
                key = (
                    row["temperature"],
                    row["examples_per_label"],
                    row["samples_per_query"],
                    row["pass"],
                )
                completed[key] = row
            logger.info("sweep checkpoint: %d row(s) reused", len(completed))
        else:
            logger.warning("sweep checkpoint config hash mismatch; ignoring it")

    def save_checkpoint(rows: list[dict]) -> None:
        if checkpoint_path is None:
            return
        atomic_write_text(
            checkpoint_path,
            json.dumps({"config_hash": run_config_hash, "rows": rows}, indent=2) + "\n",
        )

    rows: list[dict] = []
    cells = itertools.product(grid.temperatures, grid.examples_per_label, grid.samples_per_query)
    for temperature, examples_per_label, samples_per_query in cells:
        for pass_index in range(passes):
            key = (temperature, examples_per_label, samples_per_query, pass_index)
            if key in completed:
                rows.append(completed[key])
                continue
            cfg = ClassifierConfig(
                temperature=temperature,
                samples_per_query=samples_per_query,
                examples_per_label=examples_per_label,
                seed=derive_seed(
                    seed, "sweep", temperature, examples_per_label, samples_per_query, pass_index
                ),
            )
            run = classify_dataset(
                ds,
                defs,
                cfg,
                client,
                pools=pools,
                layout=layout,
                run_config_hash=run_config_hash,
            )
            report = evaluate_run(run, ds, rho_source=rho_source)
            rows.append(
                {
                    "temperature": temperature,
                    "examples_per_label": examples_per_label,
                    "samples_per_query": samples_per_query,
                    "pass": pass_index,
                    "seed": cfg.seed,
                    "n": report.n,
                    "accuracy": report.accuracy,
                    "spearman_rho": report.spearman_rho,
                }
            )
            save_checkpoint(rows)

    rows += _mean_rows(
        rows,
        lambda r: (r["temperature"], r["examples_per_label"], r["samples_per_query"]),
        ("temperature", "examples_per_label", "samples_per_query"),
    )
    return rows


def run_ablate(
    cfg: RunConfig,
    dataset_path: str | Path,
    *,
    split: str,
    track: str,
    pools_path: str | Path | None,
    settings: StudySettings,
    rho_source: str = "file",
    run_dir: Path | None = None,
) -> tuple[list[dict], Path]:
    ds = load_dataset(dataset_path, cfg.mapping, split=split, track=track)
    run_dir = run_dir if run_dir is not None else make_run_dir(cfg, "ablate")
    run_dir.mkdir(parents=True, exist_ok=True)
    completion, _, _ = make_clients(cfg, run_dir / "cost_ledger.jsonl")
    pools = load_pools(pools_path) if pools_path is not None else None
    if settings.examples_per_label > 0 and pools is None:
        raise ConfigError("ablation with examples requires --pools")
    rows = run_ablation_study(
        ds,
        pools,
        cfg.prompts.definition_set(),
        completion,
        settings,
        layout=cfg.prompts.layout(),
        rho_source=rho_source,
        run_config_hash=config_hash(cfg),
    )

    from . import reporting

    fieldnames = [
        "variant", "pass", "seed", "n", "accuracy", "spearman_rho",
        "accuracy_min", "accuracy_max", "spearman_rho_min", "spearman_rho_max",
    ]
    reporting.write_csv(run_dir / "ablation.csv", rows, fieldnames)
    if cfg.figures:
        reporting.render_ablation_figure(rows, run_dir / "ablation.png")
    return rows, run_dir


def run_sweep(
    cfg: RunConfig,
    dataset_path: str | Path,
    *,
    split: str,
    track: str,
    pools_path: str | Path | None,
    grid: SweepGrid,
    passes: int,
    rho_source: str = "file",
    run_dir: Path | None = None,
) -> tuple[list[dict], Path]:
    ds = load_dataset(dataset_path, cfg.mapping, split=split, track=track)
    run_dir = run_dir if run_dir is not None else make_run_dir(cfg, "sweep")
    run_dir.mkdir(parents=True, exist_ok=True)
    completion, _, _ = make_clients(cfg, run_dir / "cost_ledger.jsonl")
    pools = load_pools(pools_path) if pools_path is not None else None
    if any(e > 0 for e in grid.examples_per_label) and pools is None:
        raise ConfigError("sweeping examples_per_label > 0 requires --pools")
    rows = run_sweep_study(
        ds,
        pools,
        cfg.prompts.definition_set(),
        completion,
        grid,
        passes=passes,
        seed=cfg.classifier.seed,
        layout=cfg.prompts.layout(),
        rho_source=rho_source,
        run_config_hash=config_hash(cfg),
        checkpoint_path=run_dir / "sweep_checkpoint.json",
    )

    from . import reporting

    fieldnames = [
        "temperature", "examples_per_label", "samples_per_query", "pass", "seed", "n",
        "accuracy", "spearman_rho",
        "accuracy_min", "accuracy_max", "spearman_rho_min", "spearman_rho_max",
    ]
    reporting.write_csv(run_dir / "sweep.csv", rows, fieldnames)
    if cfg.figures:
        reporting.render_sweep_figures(rows, run_dir)
    return rows, run_dir
