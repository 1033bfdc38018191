"""Command-line interface for operating the pipeline end to end."""

from __future__ import annotations

import dataclasses
import functools
import json
import logging
import os
import sys
from pathlib import Path

import click

from .config import RunConfig, config_hash, load_config
from .dataset import SPLITS, TRACKS, TaskType
from .errors import ConfigError, HalludetError
from .pipeline import (
    StudySettings,
    SweepGrid,
    make_run_dir,
    run_classify,
    run_evaluate,
    run_ingest,
    run_stage1,
)
from .pipeline import run_ablate as _run_ablate
from .pipeline import run_sweep as _run_sweep
from .prompting import (
    ANSWER_INSTRUCTION,
    EXAMPLES_HEADER,
    POINT_HEADER,
    TEMPLATE_VERSION,
)

logger = logging.getLogger(__name__)


def cli_errors(fn):
    """Map package errors to machine-readable stderr records and exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HalludetError as exc:
            record = {
                "error": type(exc).__name__,
                "message": str(exc),
                "exit_code": exc.exit_code,
            }
            click.echo(json.dumps(record), err=True)
            sys.exit(exc.exit_code)

    return wrapper


def _announce_backend(cfg: RunConfig) -> None:
    backend = cfg.backend
    mock = backend.kind == "mock" or (
        backend.api_key_env and not os.environ.get(backend.api_key_env)
    )
    if mock:
        click.secho(
            "MOCK MODE: running against the seeded offline backend; "
            "outputs are synthetic.",
            fg="yellow",
            err=True,
        )


def _override_classifier(cfg: RunConfig, **overrides) -> RunConfig:
    changes = {k: v for k, v in overrides.items() if v is not None}
    if not changes:
        return cfg
    return dataclasses.replace(
        cfg, classifier=dataclasses.replace(cfg.classifier, **changes)
    )


def _override_selection(cfg: RunConfig, **overrides) -> RunConfig:
    changes = {k: v for k, v in overrides.items() if v is not None}
    if not changes:
        return cfg
    return dataclasses.replace(
        cfg, selection=dataclasses.replace(cfg.selection, **changes)
    )


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--config",
    "-c",
    "config_path",
    type=click.Path(exists=False, dir_okay=False),
    default=None,
    help="Run configuration file (YAML or JSON).",
)
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
@click.option("--output-dir", default=None, help="Directory run outputs go under.")
@click.option("--cache-dir", default=None, help="Response cache directory.")
@click.option(
    "--backend",
    "backend_kind",
    type=click.Choice(["mock", "http"]),
    default=None,
    help="Override the configured backend kind.",
)
@click.option(
    "--seed",
    type=int,
    default=None,
    help="Override the classifier, selection, and mock-backend seeds at once.",
)
@click.option(
    "--budget",
    "budget_usd",
    type=float,
    default=None,
    help="Abort when the estimated live spend (USD) exceeds this limit; needs "
    "token prices in the backend config to be non-zero.",
)
@click.option("--figures/--no-figures", "figures", default=None, help="Render PNG figures.")
@click.pass_context
@cli_errors
def main(ctx, config_path, verbose, output_dir, cache_dir, backend_kind, seed, budget_usd, figures):
    """Hallucination detection for generated text.

    Two stages: `stage1` pseudo-labels an unlabeled sample and selects
    few-shot exemplars; `classify` estimates a hallucination probability per
    point by majority vote over sampled completions. `evaluate`, `sweep`, and
    `ablate` score runs against human labels. Without an API key everything
    runs on a seeded offline mock.
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    cfg = load_config(config_path) if config_path else RunConfig()
    if output_dir is not None:
        cfg = dataclasses.replace(cfg, output_dir=output_dir)
    if cache_dir is not None:
        cfg = dataclasses.replace(cfg, cache_dir=cache_dir)
    if budget_usd is not None:
        cfg = dataclasses.replace(cfg, budget_usd=budget_usd)
    if figures is not None:
        cfg = dataclasses.replace(cfg, figures=figures)
    if backend_kind is not None:
        cfg = dataclasses.replace(
            cfg, backend=dataclasses.replace(cfg.backend, kind=backend_kind)
        )
    if seed is not None:
        cfg = dataclasses.replace(
            cfg,
            backend=dataclasses.replace(cfg.backend, seed=seed),
            classifier=dataclasses.replace(cfg.classifier, seed=seed),
            selection=dataclasses.replace(cfg.selection, seed=seed),
        )
    ctx.obj = cfg


@main.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(SPLITS), default="validation", show_default=True)
@click.option("--track", type=click.Choice(TRACKS), default="model-agnostic", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Normalized dump path.")
@click.pass_obj
@cli_errors
def ingest(cfg: RunConfig, dataset, split, track, out):
    """Validate a dataset file and write a normalized audit dump."""
    run_dir = make_run_dir(cfg, "ingest")
    out_path = Path(out) if out else run_dir / "normalized.json"
    summary = run_ingest(cfg, dataset, split=split, track=track, out=out_path)
    click.echo(json.dumps(summary, indent=2))


@main.command()
@click.argument("unlabeled", type=click.Path(exists=True, dir_okay=False))
@click.option("--track", type=click.Choice(TRACKS), default="model-agnostic", show_default=True)
@click.option("--pool-sample-size", type=int, default=None, help="Points sampled per task.")
@click.option("--k", type=int, default=None, help="Exemplars selected per (task, label).")
@click.option("--lambda-weight", type=float, default=None, help="Diversity penalty weight.")
@click.option(
    "--diversity-mode",
    type=click.Choice(["distance_penalty", "similarity_penalty"]),
    default=None,
)
@click.option("--temperature", type=float, default=None, help="Pseudo-labeling temperature.")
@click.option("--samples-per-query", type=int, default=None)
@click.pass_obj
@cli_errors
def stage1(cfg: RunConfig, unlabeled, track, pool_sample_size, k, lambda_weight, diversity_mode, temperature, samples_per_query):
    """Build pseudo-labeled exemplar pools from the unlabeled split."""
    cfg = _override_selection(
        cfg,
        pool_sample_size=pool_sample_size,
        k=k,
        lambda_weight=lambda_weight,
        diversity_mode=diversity_mode,
    )
    cfg = _override_classifier(
        cfg, temperature=temperature, samples_per_query=samples_per_query
    )
    _announce_backend(cfg)
    pools_path = run_stage1(cfg, unlabeled, track=track)
    click.echo(f"pools: {pools_path}")


@main.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(SPLITS), default="validation", show_default=True)
@click.option("--track", type=click.Choice(TRACKS), default="model-agnostic", show_default=True)
@click.option("--pools", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--examples-per-label", type=int, default=None, help="0 = zero-shot.")
@click.option("--samples-per-query", type=int, default=None)
@click.option("--temperature", type=float, default=None)
@click.pass_obj
@cli_errors
def classify(cfg: RunConfig, dataset, split, track, pools, examples_per_label, samples_per_query, temperature):
    """Classify a split; writes per-point JSON-lines predictions."""
    cfg = _override_classifier(
        cfg,
        examples_per_label=examples_per_label,
        samples_per_query=samples_per_query,
        temperature=temperature,
    )
    _announce_backend(cfg)
    predictions_path, _ = run_classify(
        cfg, dataset, split=split, track=track, pools_path=pools
    )
    click.echo(f"predictions: {predictions_path}")


@main.command()
@click.argument("predictions", type=click.Path(exists=True, dir_okay=False))
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(SPLITS), default="validation", show_default=True)
@click.option("--track", type=click.Choice(TRACKS), default="model-agnostic", show_default=True)
@click.option("--force", is_flag=True, help="Evaluate despite a dataset-hash mismatch.")
@click.option(
    "--rho-source",
    type=click.Choice(["file", "votes"]),
    default="file",
    show_default=True,
    help="Human probability: the file's field or the rater vote fraction.",
)
@click.pass_obj
@cli_errors
def evaluate(cfg: RunConfig, predictions, dataset, split, track, force, rho_source):
    """Score a predictions file against a labeled dataset."""
    report, run_dir = run_evaluate(
        cfg,
        predictions,
        dataset,
        split=split,
        track=track,
        force=force,
        rho_source=rho_source,
    )
    click.echo(json.dumps(report.to_dict(), indent=2))
    click.echo(f"report: {run_dir / 'report.json'}", err=True)


def _parse_grid(raw: str, cast) -> tuple:
    try:
        values = tuple(cast(part) for part in raw.split(",") if part.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad grid value in {raw!r}: {exc}")
    if not values:
        raise ConfigError(f"empty grid: {raw!r}")
    return values


@main.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(SPLITS), default="validation", show_default=True)
@click.option("--track", type=click.Choice(TRACKS), default="model-agnostic", show_default=True)
@click.option("--pools", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--temperatures", default="0.5,1.0,1.5", show_default=True)
@click.option("--examples-per-label-values", default="1", show_default=True)
@click.option("--samples-per-query-values", default="5", show_default=True)
@click.option("--passes", type=int, default=3, show_default=True)
@click.option("--rho-source", type=click.Choice(["file", "votes"]), default="file")
@click.pass_obj
@cli_errors
def sweep(cfg: RunConfig, dataset, split, track, pools, temperatures, examples_per_label_values, samples_per_query_values, passes, rho_source):
    """Full-factorial hyperparameter sweep with repeated passes."""
    grid = SweepGrid(
        temperatures=_parse_grid(temperatures, float),
        examples_per_label=_parse_grid(examples_per_label_values, int),
        samples_per_query=_parse_grid(samples_per_query_values, int),
    )
    _announce_backend(cfg)
    rows, run_dir = _run_sweep(
        cfg,
        dataset,
        split=split,
        track=track,
        pools_path=pools,
        grid=grid,
        passes=passes,
        rho_source=rho_source,
    )
    click.echo(f"sweep rows: {len(rows)}")
    click.echo(f"table: {run_dir / 'sweep.csv'}")


@main.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(SPLITS), default="validation", show_default=True)
@click.option("--track", type=click.Choice(TRACKS), default="model-agnostic", show_default=True)
@click.option("--pools", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--passes", type=int, default=3, show_default=True)
@click.option("--temperature", type=float, default=1.0, show_default=True)
@click.option("--samples-per-query", type=int, default=5, show_default=True)
@click.option("--examples-per-label", type=int, default=1, show_default=True)
@click.option("--rho-source", type=click.Choice(["file", "votes"]), default="file")
@click.pass_obj
@cli_errors
def ablate(cfg: RunConfig, dataset, split, track, pools, passes, temperature, samples_per_query, examples_per_label, rho_source):
    """Cumulative prompt-component removal study."""
    settings = StudySettings(
        temperature=temperature,
        samples_per_query=samples_per_query,
        examples_per_label=examples_per_label,
        passes=passes,
        seed=cfg.classifier.seed,
    )
    _announce_backend(cfg)
    rows, run_dir = _run_ablate(
        cfg,
        dataset,
        split=split,
        track=track,
        pools_path=pools,
        settings=settings,
        rho_source=rho_source,
    )
    click.echo(f"ablation rows: {len(rows)}")
    click.echo(f"table: {run_dir / 'ablation.csv'}")


@main.command(name="dump-defaults")
@click.option("--json", "as_json", is_flag=True, help="Structured output.")
@click.pass_obj
@cli_errors
def dump_defaults(cfg: RunConfig, as_json):
    """Print the embedded definitions and prompt skeleton for audit."""
    defs = cfg.prompts.definition_set()
    if as_json:
        payload = {
            "template_version": TEMPLATE_VERSION,
            "concept_definition": defs.concept_definition,
            "task_definitions": {t.value: defs.task_definitions[t] for t in TaskType},
            "role_definitions": {t.value: defs.role_definitions[t] for t in TaskType},
            "examples_header": EXAMPLES_HEADER,
            "point_header": POINT_HEADER,
            "answer_instruction": ANSWER_INSTRUCTION,
            "layout": {
                "examples_before_point": cfg.prompts.examples_before_point,
                "positives_first": cfg.prompts.positives_first,
            },
            "config_hash": config_hash(cfg),
        }
        click.echo(json.dumps(payload, indent=2, ensure_ascii=False))
        return
    click.echo(f"template version: {TEMPLATE_VERSION}")
    click.echo(f"\nconcept definition:\n  {defs.concept_definition}")
    for task in TaskType:
        click.echo(f"\n[{task.value}]")
        click.echo(f"  task: {defs.task_definitions[task]}")
        click.echo(f"  role: {defs.role_definitions[task]}")
    click.echo("\nprompt skeleton (system: role, task, concept; user below):")
    click.echo(f"  {EXAMPLES_HEADER}")
    click.echo("  <serialized examples: Input/Target/Generated/Label>")
    click.echo(f"  {POINT_HEADER}")
    click.echo("  <Input text / Target text / Generated text>")
    click.echo(f"  {ANSWER_INSTRUCTION}")
    click.echo(
        f"\nlayout: examples_before_point={cfg.prompts.examples_before_point} "
        f"positives_first={cfg.prompts.positives_first}"
    )


if __name__ == "__main__":
    main()
