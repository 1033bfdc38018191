"""Label + probability estimation via temperature sampling and majority vote.

One classification issues ``samples_per_query`` independent completions of
the same prompt, parses each reply, and estimates the hallucination
probability as positive votes over valid votes (exact integer counting).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .dataset import DataPoint, Label
from .errors import ConfigError, TooManyUnparseable
from .llm.base import CompletionClient, CompletionSample, parse_label
from .prompting import (
    DEFAULT_LAYOUT,
    FULL_PROMPT,
    DefinitionSet,
    Example,
    PromptLayout,
    PromptVariant,
    render_few_shot,
    with_format_reminder,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassifierConfig:
    """Sampling hyperparameters; the defaults are the submission settings."""

    temperature: float = 1.2
    samples_per_query: int = 20
    examples_per_label: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        if self.samples_per_query < 1:
            raise ConfigError(
                f"samples_per_query must be >= 1, got {self.samples_per_query}"
            )
        if self.examples_per_label < 0:
            raise ConfigError(
                f"examples_per_label must be >= 0, got {self.examples_per_label}"
            )


def majority_label(probability: float) -> Label:
    """Strict-majority rule: exactly 0.5 stays NotHallucination."""
    if not 0.0 <= probability <= 1.0:
        raise ValueError(f"probability {probability} outside [0, 1]")
    return Label.HALLUCINATION if probability > 0.5 else Label.NOT_HALLUCINATION


@dataclass(frozen=True)
class Classification:
    label: Label
    probability: float
    samples: tuple[CompletionSample, ...]
    valid_sample_count: int
    positive_count: int


def _min_valid(samples_per_query: int) -> int:
    # ceil(samples_per_query / 2)
    return (samples_per_query + 1) // 2


def classify(
    dp: DataPoint,
    examples: Sequence[Example],
    cfg: ClassifierConfig,
    defs: DefinitionSet,
    client: CompletionClient,
    *,
    variant: PromptVariant = FULL_PROMPT,
    layout: PromptLayout = DEFAULT_LAYOUT,
) -> Classification:
    """Classify one data point.

    An unparseable reply gets exactly one re-query with a format reminder
    appended; if still unparseable the sample is recorded as such and drops
    out of the vote denominator. Sample requests may run concurrently, but
    the vote is a deterministic fold over samples in index order.
    """
    bundle = render_few_shot(dp, examples, defs, variant=variant, layout=layout)

    def one_sample(sample_index: int) -> CompletionSample:
        raw = client.complete(
            bundle, cfg.temperature, seed=cfg.seed, sample_index=sample_index
        )
        parsed = parse_label(raw)
        if parsed is None:
            raw = client.complete(
                with_format_reminder(bundle),
                cfg.temperature,
                seed=cfg.seed,
                sample_index=sample_index,
            )
            parsed = parse_label(raw)
        return CompletionSample(
            raw_text=raw,
            parsed=parsed,
            temperature=cfg.temperature,
            sample_index=sample_index,
        )

    workers = min(getattr(client, "max_concurrency", 1) or 1, cfg.samples_per_query)
    indices = range(cfg.samples_per_query)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = tuple(pool.map(one_sample, indices))
    else:
        samples = tuple(one_sample(i) for i in indices)

    valid = [s for s in samples if s.parsed is not None]
    if len(valid) < _min_valid(cfg.samples_per_query):
        raise TooManyUnparseable(
            f"{dp.id}: only {len(valid)} of {cfg.samples_per_query} samples parsed"
        )
    positives = sum(1 for s in valid if s.parsed is Label.HALLUCINATION)
    probability = positives / len(valid)
    return Classification(
        label=majority_label(probability),
        probability=probability,
        samples=samples,
        valid_sample_count=len(valid),
        positive_count=positives,
    )
