"""Few-shot exemplar pools and greedy confidence/diversity selection.

The first pick from a pool is the example whose pseudo-label probability has
maximal negative entropy (most confident vote). Each later pick maximizes
that confidence minus a weighted embedding-similarity term against the
already-selected set; picked items leave the pool. Selections are ordered,
so a run needing fewer exemplars per label takes a prefix of the stored
selection instead of re-running the pseudo-labeling stage.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifier import ClassifierConfig, classify
from .dataset import DataPoint, Dataset, Label, TaskType, parse_task, point_record, sample_per_task
from .errors import (
    ConfigError,
    DimensionMismatch,
    DomainError,
    EmptyPool,
    InvariantViolation,
)
from .llm.base import CompletionClient, EmbeddingClient
from .prompting import DefinitionSet, Example, PromptLayout, order_examples

logger = logging.getLogger(__name__)

POOLS_VERSION = "pools/v1"

# Versioned field concatenation embedded for similarity; byte-stable.
POINT_TEXT_VERSION = "point-text/v1"

DIVERSITY_MODES = ("distance_penalty", "similarity_penalty")


@dataclass(frozen=True)
class SelectionConfig:
    """Greedy-selection settings.

    ``diversity_mode`` picks the penalty form: ``distance_penalty`` subtracts
    ``lambda * max(1 - cos)`` over the selected set (the default),
    ``similarity_penalty`` subtracts ``lambda * max(cos)`` (rewards picks far
    from the selected set). Both are kept because they favor opposite
    candidates and the study configuration must be explicit about which ran.
    """

    k: int = 5
    lambda_weight: float = 0.2
    pool_sample_size: int = 64
    seed: int = 0
    diversity_mode: str = "distance_penalty"

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.lambda_weight < 0:
            raise ConfigError(f"lambda_weight must be >= 0, got {self.lambda_weight}")
        if self.pool_sample_size < 1:
            raise ConfigError(
                f"pool_sample_size must be >= 1, got {self.pool_sample_size}"
            )
        if self.diversity_mode not in DIVERSITY_MODES:
            raise ConfigError(
                f"diversity_mode must be one of {DIVERSITY_MODES}, "
                f"got {self.diversity_mode!r}"
            )


def negative_entropy(p: float) -> float:
    """p*ln(p) + (1-p)*ln(1-p), with the limit convention 0*ln(0) = 0.

    Always <= 0; equals 0 exactly at p in {0, 1} and attains its minimum
    -ln(2) at p = 0.5. Natural logarithm throughout: the combined selection
    score is not invariant under a change of log base unless the diversity
    weight is rescaled with it.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability {p} outside [0, 1]")
    acc = 0.0
    if p > 0.0:
        acc += p * math.log(p)
    if p < 1.0:
        acc += (1.0 - p) * math.log(1.0 - p)
    return acc


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"embedding shapes differ: {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        raise DimensionMismatch("cannot take cosine similarity with a zero vector")
    return float(np.dot(a, b)) / denom


def selection_score(
    candidate: Example,
    selected: Sequence[Example],
    lambda_weight: float,
    *,
    mode: str = "distance_penalty",
) -> float:
    """Confidence minus the weighted similarity penalty against ``selected``."""
    if not selected:
        raise ValueError("selected set must be non-empty; use negative_entropy first")
    if candidate.embedding is None:
        raise DimensionMismatch(f"{candidate.point.id}: candidate has no embedding")
    sims = [cosine_similarity(candidate.embedding, s.embedding) for s in selected]
    if mode == "distance_penalty":
        penalty = max(1.0 - s for s in sims)
    elif mode == "similarity_penalty":
        penalty = max(sims)
    else:
        raise ConfigError(f"unknown diversity mode: {mode!r}")
    return negative_entropy(candidate.probability) - lambda_weight * penalty


@dataclass(eq=False)
class ExamplePool:
    """All pseudo-labeled examples for one (task, label) cell."""

    task: TaskType
    label: Label
    examples: list[Example]

    def __post_init__(self):
        dims = set()
        for e in self.examples:
            if e.point.task is not self.task:
                raise InvariantViolation(
                    f"pool ({self.task.value}, {self.label.value}) contains point "
                    f"{e.point.id} for task {e.point.task.value}"
                )
            if e.label is not self.label:
                raise InvariantViolation(
                    f"pool ({self.task.value}, {self.label.value}) contains example "
                    f"{e.point.id} labeled {e.label.value}"
                )
            if e.embedding is not None:
                dims.add(int(np.asarray(e.embedding).shape[0]))
        if len(dims) > 1:
            raise DimensionMismatch(
                f"pool ({self.task.value}, {self.label.value}) mixes embedding "
                f"dimensions {sorted(dims)}"
            )


def select_examples(pool: ExamplePool, cfg: SelectionConfig) -> list[Example]:
    """Greedy pick of min(k, pool size) examples, in pick order.

    Ties break toward the lowest pool index (pools retain dataset order, so
    this is dataset order). Asking for more than the pool holds returns the
    whole pool, permuted into pick order, with a warning.
    """
    if not pool.examples:
        raise EmptyPool(f"pool ({pool.task.value}, {pool.label.value}) is empty")
    n = len(pool.examples)
    if cfg.k > n:
        logger.warning(
            "pool (%s, %s) has %d examples; k=%d truncated",
            pool.task.code,
            pool.label.value,
            n,
            cfg.k,
        )
    k = min(cfg.k, n)

    confidences = np.array(
        [negative_entropy(e.probability) for e in pool.examples], dtype=np.float64
    )
    embeddings = None
    norms = None
    if k > 1:
        if any(e.embedding is None for e in pool.examples):
            raise DimensionMismatch(
                f"pool ({pool.task.value}, {pool.label.value}) has examples "
                "without embeddings; cannot score diversity"
            )
        embeddings = np.stack([np.asarray(e.embedding, dtype=np.float64) for e in pool.examples])
        norms = np.linalg.norm(embeddings, axis=1)
        if np.any(norms == 0):
            raise DimensionMismatch("zero-norm embedding in pool")

    remaining = list(range(n))
    # Running max over the selected set, updated as picks accumulate:
    # max(1 - cos) for distance_penalty, max(cos) for similarity_penalty.
    penalties = np.full(n, -np.inf)
    picked: list[int] = []

    for round_index in range(k):
        if round_index == 0:
            scores = confidences[remaining]
        else:
            scores = confidences[remaining] - cfg.lambda_weight * penalties[remaining]
        best = remaining[int(np.argmax(scores))]  # first max = lowest index
        picked.append(best)
        remaining.remove(best)
        if remaining and embeddings is not None:
            rest = np.array(remaining)
            sims = embeddings[rest] @ embeddings[best] / (norms[rest] * norms[best])
            if cfg.diversity_mode == "distance_penalty":
                update = 1.0 - sims
            else:
                update = sims
            penalties[rest] = np.maximum(penalties[rest], update)

    return [pool.examples[i] for i in picked]


def point_text(dp: DataPoint) -> str:
    """Field concatenation whose embedding stands in for the data point."""
    return (
        f"Task: {dp.task.value}\n"
        f"Input text: {dp.input_text}\n"
        f"Target text: {dp.target_text}\n"
        f"Generated text: {dp.generated_text}"
    )


def embed_point(dp: DataPoint, embedding_client: EmbeddingClient) -> np.ndarray:
    return embedding_client.embed(point_text(dp))


def build_pools(
    unlabeled: Dataset,
    defs: DefinitionSet,
    classifier_cfg: ClassifierConfig,
    selection_cfg: SelectionConfig,
    completion_client: CompletionClient,
    embedding_client: EmbeddingClient,
) -> dict[tuple[TaskType, Label], ExamplePool]:
    """Pseudo-label a per-task sample of the unlabeled split and partition it.

    Every sampled point is classified zero-shot, embedded, and dropped into
    the (task, majority label) cell. Cells that receive nothing are kept
    empty and reported.
    """
    zero_shot_cfg = replace(classifier_cfg, examples_per_label=0)
    sampled = sample_per_task(unlabeled, selection_cfg.pool_sample_size, selection_cfg.seed)

    pools: dict[tuple[TaskType, Label], ExamplePool] = {}
    for task, points in sampled.items():
        examples: list[Example] = []
        for dp in points:
            result = classify(dp, (), zero_shot_cfg, defs, completion_client)
            examples.append(
                Example(
                    point=dp,
                    label=result.label,
                    probability=result.probability,
                    embedding=embed_point(dp, embedding_client),
                )
            )
        for label in Label:
            cell = [e for e in examples if e.label is label]
            if not cell:
                logger.warning(
                    "pool (%s, %s) received no examples", task.code, label.value
                )
            pools[(task, label)] = ExamplePool(task=task, label=label, examples=cell)
    return pools


def select_all(
    pools: dict[tuple[TaskType, Label], ExamplePool],
    cfg: SelectionConfig,
) -> dict[tuple[TaskType, Label], list[Example]]:
    selections: dict[tuple[TaskType, Label], list[Example]] = {}
    for key, pool in pools.items():
        selections[key] = select_examples(pool, cfg) if pool.examples else []
    return selections


@dataclass
class PoolsArtifact:
    """Persisted output of the pool-building stage."""

    pools: dict[tuple[TaskType, Label], ExamplePool]
    selections: dict[tuple[TaskType, Label], list[Example]]
    config_hash: str
    selection: dict
    created_at: str


def save_pools(
    path: str | Path,
    pools: dict[tuple[TaskType, Label], ExamplePool],
    selections: dict[tuple[TaskType, Label], list[Example]],
    *,
    selection_cfg: SelectionConfig,
    config_hash: str,
) -> None:
    cells = []
    for (task, label), pool in sorted(
        pools.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
    ):
        index_of = {id(e): i for i, e in enumerate(pool.examples)}
        cells.append(
            {
                "task": task.value,
                "label": label.value,
                "examples": [
                    {
                        "point": point_record(e.point),
                        "probability": e.probability,
                        "embedding": None
                        if e.embedding is None
                        else [float(x) for x in e.embedding],
                    }
                    for e in pool.examples
                ],
                "selected": [index_of[id(e)] for e in selections.get((task, label), [])],
            }
        )
    payload = {
        "version": POOLS_VERSION,
        "point_text_version": POINT_TEXT_VERSION,
        "config_hash": config_hash,
        "created_at": dt.datetime.now(dt.timezone.utc).isoformat(),
        "selection": {
            "k": selection_cfg.k,
            "lambda_weight": selection_cfg.lambda_weight,
            "pool_sample_size": selection_cfg.pool_sample_size,
            "seed": selection_cfg.seed,
            "diversity_mode": selection_cfg.diversity_mode,
        },
        "cells": cells,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def load_pools(path: str | Path) -> PoolsArtifact:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw.get("version") != POOLS_VERSION:
        raise InvariantViolation(
            f"{path}: unsupported pools artifact version {raw.get('version')!r}"
        )
    pools: dict[tuple[TaskType, Label], ExamplePool] = {}
    selections: dict[tuple[TaskType, Label], list[Example]] = {}
    for cell in raw["cells"]:
        task = parse_task(cell["task"])
        label = Label(cell["label"])
        examples = []
        for entry in cell["examples"]:
            p = entry["point"]
            examples.append(
                Example(
                    point=DataPoint(
                        id=p["id"],
                        task=parse_task(p["task"]),
                        input_text=p["input_text"],
                        target_text=p["target_text"],
                        generated_text=p["generated_text"],
                        model_id=p.get("model_id"),
                    ),
                    label=label,
                    probability=entry["probability"],
                    embedding=None
                    if entry["embedding"] is None
                    else np.asarray(entry["embedding"], dtype=np.float64),
                )
            )
        pools[(task, label)] = ExamplePool(task=task, label=label, examples=examples)
        selections[(task, label)] = [examples[i] for i in cell["selected"]]
    return PoolsArtifact(
        pools=pools,
        selections=selections,
        config_hash=raw.get("config_hash", ""),
        selection=raw.get("selection", {}),
        created_at=raw.get("created_at", ""),
    )


def examples_for_task(
    artifact: PoolsArtifact,
    task: TaskType,
    per_label: int,
    *,
    positives_first: bool = True,
) -> list[Example]:
    """First ``per_label`` stored picks for each label of one task.

    The stored selection is in pick order, so a shorter prefix is exactly
    what a smaller k would have chosen.
    """
    if per_label == 0:
        return []
    out: dict[Label, list[Example]] = {}
    for label in Label:
        chosen = artifact.selections.get((task, label), [])[:per_label]
        if len(chosen) < per_label:
            logger.warning(
                "selection (%s, %s) holds %d example(s); %d requested",
                task.code,
                label.value,
                len(chosen),
                per_label,
            )
        out[label] = chosen
    return order_examples(
        out[Label.HALLUCINATION],
        out[Label.NOT_HALLUCINATION],
        layout=PromptLayout(positives_first=positives_first),
    )
