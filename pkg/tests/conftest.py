"""Shared fixtures: synthetic datasets, definitions, offline clients."""

from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np
import pytest

from halludet.dataset import DataPoint, Label, TaskType
from halludet.llm import MockCompletionClient, MockEmbeddingClient
from halludet.prompting import DefinitionSet, Example

TASK_INPUTS = {
    TaskType.DEFINITION_MODELING: "The Dutch would sometimes <define> inundate </define> the land .",
    TaskType.PARAPHRASE_GENERATION: "The committee approved the budget on Monday.",
    TaskType.MACHINE_TRANSLATION: "Der Hund schläft unter dem Tisch.",
    TaskType.TEXT_SIMPLIFICATION: "The municipality promulgated an ordinance prohibiting vehicular traffic.",
}


def make_point(task: TaskType, index: int, *, split="validation", track="model-agnostic") -> DataPoint:
    return DataPoint(
        id=f"{split}-{track}-{task.code}-{index}",
        task=task,
        input_text=f"{TASK_INPUTS[task]} (case {index})",
        target_text=f"reference output {task.code} {index}",
        generated_text=f"generated output {task.code} {index}",
    )


def unlabeled_records(points_per_task: int) -> list[dict]:
    records = []
    for task in TaskType:
        for i in range(points_per_task):
            dp = make_point(task, i, split="train-unlabeled")
            records.append(
                {
                    "task": task.code,
                    "src": dp.input_text,
                    "tgt": dp.target_text,
                    "hyp": dp.generated_text,
                }
            )
    return records


def validation_records(points_per_task: int, seed: int = 11, n_raters: int = 5) -> list[dict]:
    rng = random.Random(seed)
    records = []
    for task in TaskType:
        for i in range(points_per_task):
            dp = make_point(task, i)
            positives = rng.randint(0, n_raters)
            labels = [Label.HALLUCINATION.value] * positives + [
                Label.NOT_HALLUCINATION.value
            ] * (n_raters - positives)
            record = {
                "task": task.code,
                "src": dp.input_text,
                "tgt": dp.target_text,
                "hyp": dp.generated_text,
                "labels": labels,
                "p(Hallucination)": positives / n_raters,
            }
            majority = (
                Label.HALLUCINATION.value
                if positives > n_raters - positives
                else Label.NOT_HALLUCINATION.value
            )
            record["label"] = majority
            records.append(record)
    return records


@pytest.fixture
def unlabeled_file(tmp_path: Path) -> Path:
    path = tmp_path / "train.model-agnostic.json"
    path.write_text(json.dumps(unlabeled_records(16)), encoding="utf-8")
    return path


@pytest.fixture
def validation_file(tmp_path: Path) -> Path:
    path = tmp_path / "val.model-agnostic.json"
    path.write_text(json.dumps(validation_records(6)), encoding="utf-8")
    return path


@pytest.fixture
def defs() -> DefinitionSet:
    return DefinitionSet.defaults()


@pytest.fixture
def mock_client() -> MockCompletionClient:
    return MockCompletionClient(0.5, seed=7)


@pytest.fixture
def mock_embedder() -> MockEmbeddingClient:
    return MockEmbeddingClient(dim=16, seed=7)


def make_example(
    task: TaskType,
    index: int,
    probability: float,
    embedding: np.ndarray | None = None,
) -> Example:
    label = Label.HALLUCINATION if probability > 0.5 else Label.NOT_HALLUCINATION
    return Example(
        point=make_point(task, index),
        label=label,
        probability=probability,
        embedding=embedding,
    )


# --- acceptance criterion reporting -----------------------------------------

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_runtest_makereport(item, call):
    if call.when != "call" or "test_acceptance" not in str(item.fspath):
        return
    doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
    if call.excinfo is None:
        outcome = "PASS"
    elif call.excinfo.errisinstance(Exception):
        outcome = "FAIL"
    else:  # Skipped and friends derive from BaseException
        outcome = "SKIP"
    _ACCEPTANCE_RESULTS.append((outcome, doc))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for outcome, doc in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{outcome}: {doc}")
