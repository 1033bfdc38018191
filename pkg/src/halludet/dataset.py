"""Task-instance datasets: loading, validation, sampling, and consensus strata.

Input files are JSON arrays of objects. Source key names vary between
releases, so they are configuration (:class:`FieldMapping`), not code; the
default mapping targets the SemEval-2024 hallucination-detection shared-task
release files (``src``/``tgt``/``hyp``/``task``/``labels``/``label``/
``p(Hallucination)``).
"""

from __future__ import annotations

import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

from .errors import (
    InvariantViolation,
    MalformedFile,
    MissingField,
    UnknownTask,
)
from .util import file_sha256

logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-9

DEFINE_OPEN = "<define>"
DEFINE_CLOSE = "</define>"

TRACKS = ("model-agnostic", "model-aware")
SPLITS = ("train-unlabeled", "validation", "test")


class TaskType(Enum):
    DEFINITION_MODELING = "Definition Modeling"
    PARAPHRASE_GENERATION = "Paraphrase Generation"
    MACHINE_TRANSLATION = "Machine Translation"
    TEXT_SIMPLIFICATION = "Text Simplification"

    @property
    def code(self) -> str:
        return _TASK_CODES[self]


_TASK_CODES = {
    TaskType.DEFINITION_MODELING: "DM",
    TaskType.PARAPHRASE_GENERATION: "PG",
    TaskType.MACHINE_TRANSLATION: "MT",
    TaskType.TEXT_SIMPLIFICATION: "TS",
}

# Accept both the spelled-out names and the two-letter codes found in
# release files, case-insensitively.
_TASK_ALIASES: dict[str, TaskType] = {}
for _task in TaskType:
    _TASK_ALIASES[_task.value.lower()] = _task
    _TASK_ALIASES[_task.code.lower()] = _task


def parse_task(raw: object) -> TaskType:
    if isinstance(raw, str):
        task = _TASK_ALIASES.get(raw.strip().lower())
        if task is not None:
            return task
    raise UnknownTask(f"unknown task string: {raw!r}")


class Label(Enum):
    HALLUCINATION = "Hallucination"
    NOT_HALLUCINATION = "Not Hallucination"


def parse_gold_label(raw: object) -> Label:
    if isinstance(raw, str):
        for label in Label:
            if raw.strip() == label.value:
                return label
    raise InvariantViolation(f"unknown label string: {raw!r}")


@dataclass(frozen=True)
class DataPoint:
    """One task instance: what the generating model was given and produced."""

    id: str
    task: TaskType
    input_text: str
    target_text: str
    generated_text: str
    model_id: str | None = None

    def __post_init__(self):
        if not self.input_text:
            raise InvariantViolation(f"{self.id}: input_text is empty")
        if not self.generated_text:
            raise InvariantViolation(f"{self.id}: generated_text is empty")
        if self.task is TaskType.DEFINITION_MODELING:
            open_at = self.input_text.find(DEFINE_OPEN)
            close_at = self.input_text.find(DEFINE_CLOSE)
            if open_at < 0 or close_at < 0 or close_at < open_at:
                raise InvariantViolation(
                    f"{self.id}: Definition Modeling input must contain "
                    f"'{DEFINE_OPEN}' then '{DEFINE_CLOSE}'"
                )


def _strict_majority(rater_labels: tuple[Label, ...]) -> Label | None:
    positives = sum(1 for lab in rater_labels if lab is Label.HALLUCINATION)
    negatives = len(rater_labels) - positives
    if positives > negatives:
        return Label.HALLUCINATION
    if negatives > positives:
        return Label.NOT_HALLUCINATION
    return None


@dataclass(frozen=True)
class LabeledDataPoint:
    """A data point plus human judgments.

    ``gold_label`` is ``None`` only when the rater votes tie exactly and the
    source file carried no label of its own; such points are unevaluable for
    accuracy but still usable for probability correlation.
    """

    point: DataPoint
    gold_label: Label | None
    human_probability: float
    rater_labels: tuple[Label, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.human_probability <= 1.0:
            raise InvariantViolation(
                f"{self.point.id}: human_probability {self.human_probability} outside [0, 1]"
            )
        if self.rater_labels:
            vote_fraction = (
                sum(1 for lab in self.rater_labels if lab is Label.HALLUCINATION)
                / len(self.rater_labels)
            )
            if abs(vote_fraction - self.human_probability) > PROBABILITY_TOLERANCE:
                raise InvariantViolation(
                    f"{self.point.id}: human_probability {self.human_probability} "
                    f"inconsistent with rater votes ({vote_fraction})"
                )
            majority = _strict_majority(self.rater_labels)
            if majority is not None and self.gold_label is not majority:
                raise InvariantViolation(
                    f"{self.point.id}: gold_label {self.gold_label} does not match "
                    f"the strict rater majority {majority}"
                )

    @property
    def vote_fraction(self) -> float | None:
        if not self.rater_labels:
            return None
        return (
            sum(1 for lab in self.rater_labels if lab is Label.HALLUCINATION)
            / len(self.rater_labels)
        )


@dataclass(frozen=True)
class Dataset:
    points: tuple[DataPoint | LabeledDataPoint, ...]
    track: str
    split: str
    source_sha256: str | None = None

    def __post_init__(self):
        if self.track not in TRACKS:
            raise InvariantViolation(f"unknown track: {self.track!r}")
        if self.split not in SPLITS:
            raise InvariantViolation(f"unknown split: {self.split!r}")
        seen: set[str] = set()
        for p in self.points:
            pid = p.point.id if isinstance(p, LabeledDataPoint) else p.id
            if pid in seen:
                raise InvariantViolation(f"duplicate id in dataset: {pid!r}")
            seen.add(pid)

    def __len__(self) -> int:
        return len(self.points)

    def data_points(self) -> list[DataPoint]:
        """Underlying points in file order, label information stripped."""
        return [
            p.point if isinstance(p, LabeledDataPoint) else p for p in self.points
        ]

    def labeled_points(self) -> list[LabeledDataPoint]:
        return [p for p in self.points if isinstance(p, LabeledDataPoint)]


@dataclass(frozen=True)
class FieldMapping:
    """Source key names for each record field; ``None`` disables a field.

    The defaults read the shared-task release files. ``id=None`` synthesizes
    stable ids of the form ``<split>-<track>-<index>``.
    """

    task: str = "task"
    input_text: str = "src"
    target_text: str = "tgt"
    generated_text: str = "hyp"
    id: str | None = None
    model_id: str | None = "model"
    gold_label: str | None = "label"
    probability: str | None = "p(Hallucination)"
    rater_labels: str | None = "labels"

    @classmethod
    def from_dict(cls, raw: dict) -> "FieldMapping":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvariantViolation(f"unknown field-mapping keys: {sorted(unknown)}")
        return cls(**raw)


DEFAULT_MAPPING = FieldMapping()

# Mapping for files produced by dump_dataset().
NORMALIZED_MAPPING = FieldMapping(
    task="task",
    input_text="input_text",
    target_text="target_text",
    generated_text="generated_text",
    id="id",
    model_id="model_id",
    gold_label="gold_label",
    probability="human_probability",
    rater_labels="rater_labels",
)


def _parse_record(
    record: dict,
    index: int,
    mapping: FieldMapping,
    split: str,
    track: str,
) -> DataPoint | LabeledDataPoint:
    if not isinstance(record, dict):
        raise MalformedFile(f"record {index} is not an object")

    def required(key: str) -> object:
        if key not in record:
            raise MissingField(f"record {index}: missing key {key!r}")
        return record[key]

    task = parse_task(required(mapping.task))
    input_text = str(required(mapping.input_text))
    target_text = str(required(mapping.target_text))
    generated_text = str(required(mapping.generated_text))

    if mapping.id is not None and mapping.id in record:
        point_id = str(record[mapping.id])
    else:
        point_id = f"{split}-{track}-{index}"

    model_id = None
    if mapping.model_id is not None:
        raw_model = record.get(mapping.model_id)
        if raw_model not in (None, ""):
            model_id = str(raw_model)

    point = DataPoint(
        id=point_id,
        task=task,
        input_text=input_text,
        target_text=target_text,
        generated_text=generated_text,
        model_id=model_id,
    )

    raw_raters = record.get(mapping.rater_labels) if mapping.rater_labels else None
    raw_gold = record.get(mapping.gold_label) if mapping.gold_label else None
    raw_prob = record.get(mapping.probability) if mapping.probability else None
    if raw_raters is None and raw_gold is None and raw_prob is None:
        return point

    rater_labels: tuple[Label, ...] = ()
    if raw_raters is not None:
        if not isinstance(raw_raters, list):
            raise InvariantViolation(f"record {index}: rater labels must be a list")
        rater_labels = tuple(parse_gold_label(r) for r in raw_raters)

    if raw_prob is not None:
        if not isinstance(raw_prob, (int, float)) or isinstance(raw_prob, bool):
            raise InvariantViolation(f"record {index}: probability must be numeric")
        probability = float(raw_prob)
    elif rater_labels:
        probability = (
            sum(1 for lab in rater_labels if lab is Label.HALLUCINATION)
            / len(rater_labels)
        )
    else:
        raise MissingField(
            f"record {index}: labeled record has neither probability nor rater labels"
        )

    if raw_gold is not None:
        gold = parse_gold_label(raw_gold)
    elif rater_labels:
        # On an exact tie there is no majority and no file label: unevaluable.
        gold = _strict_majority(rater_labels)
    else:
        gold = None

    return LabeledDataPoint(
        point=point,
        gold_label=gold,
        human_probability=probability,
        rater_labels=rater_labels,
    )


def load_dataset(
    path: str | Path,
    mapping: FieldMapping = DEFAULT_MAPPING,
    *,
    split: str,
    track: str,
) -> Dataset:
    """Load and validate one file; all-or-nothing.

    Every failing record is reported with its index; any failure aborts the
    whole load.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MalformedFile(f"{path}: file not found")
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: not valid JSON ({exc})")
    if not isinstance(raw, list):
        raise MalformedFile(f"{path}: top-level JSON value must be an array")

    points: list[DataPoint | LabeledDataPoint] = []
    problems: list[tuple[int, Exception]] = []
    for index, record in enumerate(raw):
        try:
            points.append(_parse_record(record, index, mapping, split, track))
        except (MalformedFile, UnknownTask, MissingField, InvariantViolation) as exc:
            problems.append((index, exc))

    if problems:
        detail = "; ".join(f"[{i}] {exc}" for i, exc in problems[:20])
        if len(problems) > 20:
            detail += f"; ... {len(problems) - 20} more"
        first = problems[0][1]
        raise type(first)(
            f"{path}: {len(problems)} record(s) failed validation: {detail}"
        )

    return Dataset(
        points=tuple(points),
        track=track,
        split=split,
        source_sha256=file_sha256(path),
    )


def point_record(dp: DataPoint) -> dict:
    record = {
        "id": dp.id,
        "task": dp.task.value,
        "input_text": dp.input_text,
        "target_text": dp.target_text,
        "generated_text": dp.generated_text,
    }
    if dp.model_id is not None:
        record["model_id"] = dp.model_id
    return record


def dataset_records(ds: Dataset) -> list[dict]:
    records = []
    for p in ds.points:
        if isinstance(p, LabeledDataPoint):
            record = point_record(p.point)
            if p.gold_label is not None:
                record["gold_label"] = p.gold_label.value
            record["human_probability"] = p.human_probability
            if p.rater_labels:
                record["rater_labels"] = [lab.value for lab in p.rater_labels]
        else:
            record = point_record(p)
        records.append(record)
    return records


def dumps_dataset(ds: Dataset) -> str:
    """Normalized audit dump; loading it back reproduces these bytes."""
    return json.dumps(dataset_records(ds), ensure_ascii=False, indent=2) + "\n"


def dump_dataset(ds: Dataset, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps_dataset(ds), encoding="utf-8")


def sample_per_task(
    ds: Dataset, n: int, seed: int
) -> dict[TaskType, list[DataPoint]]:
    """Uniform sample without replacement per task group.

    Deterministic in (ds, n, seed); each task draws from its own seeded
    generator so one group's size cannot perturb another group's sample.
    File order is retained within each sample. Groups smaller than ``n``
    are returned whole with a warning.
    """
    if n <= 0:
        raise ValueError(f"sample size must be positive, got {n}")
    groups: dict[TaskType, list[DataPoint]] = {}
    for dp in ds.data_points():
        groups.setdefault(dp.task, []).append(dp)

    sampled: dict[TaskType, list[DataPoint]] = {}
    for task in TaskType:
        if task not in groups:
            continue
        pts = groups[task]
        if len(pts) <= n:
            if len(pts) < n:
                logger.warning(
                    "task %s has only %d points (%d requested); using all",
                    task.code,
                    len(pts),
                    n,
                )
            sampled[task] = list(pts)
        else:
            rng = random.Random(f"{seed}:{task.code}")
            indices = sorted(rng.sample(range(len(pts)), n))
            sampled[task] = [pts[i] for i in indices]
    return sampled


STRATUM_LOW = "low"
STRATUM_HIGH = "high"
STRATUM_UNANIMOUS = "unanimous"
STRATA = (STRATUM_LOW, STRATUM_HIGH, STRATUM_UNANIMOUS)


@dataclass
class ConsensusStrata:
    """Partition of labeled points by human vote split.

    ``excluded`` holds points whose rater count differs from the modal count
    (they are reported, never silently dropped).
    """

    strata: dict[str, list[LabeledDataPoint]]
    excluded: list[LabeledDataPoint]
    rater_count: int


def fixed_rater_points(
    points: list[LabeledDataPoint],
) -> tuple[list[LabeledDataPoint], list[LabeledDataPoint], int]:
    """Split points into (modal-rater-count points, excluded points, count)."""
    counts = Counter(len(p.rater_labels) for p in points if p.rater_labels)
    if not counts:
        return [], list(points), 0
    # Most common count wins; ties broken toward the larger panel.
    mode = max(counts, key=lambda c: (counts[c], c))
    kept, excluded = [], []
    for p in points:
        if len(p.rater_labels) == mode:
            kept.append(p)
        else:
            excluded.append(p)
    return kept, excluded, mode


def stratify_by_consensus(ds: Dataset) -> ConsensusStrata:
    """Partition labeled points into low / high / unanimous consensus strata.

    With the usual five raters the strata are the 3-of-5, 4-of-5, and 5-of-5
    vote splits. For other panel sizes the minimal strict majority maps to
    ``low`` (an exact tie counts as weakest consensus), a full panel to
    ``unanimous``, and anything between to ``high``.
    """
    labeled = ds.labeled_points()
    kept, excluded, n_raters = fixed_rater_points(labeled)
    if excluded:
        logger.warning(
            "excluding %d point(s) whose rater count differs from the modal %d: %s",
            len(excluded),
            n_raters,
            [p.point.id for p in excluded][:10],
        )

    strata: dict[str, list[LabeledDataPoint]] = {name: [] for name in STRATA}
    minimal_majority = n_raters // 2 + 1
    for p in kept:
        positives = sum(1 for lab in p.rater_labels if lab is Label.HALLUCINATION)
        top = max(positives, n_raters - positives)
        if top == n_raters:
            strata[STRATUM_UNANIMOUS].append(p)
        elif top <= minimal_majority:
            strata[STRATUM_LOW].append(p)
        else:
            strata[STRATUM_HIGH].append(p)
    return ConsensusStrata(strata=strata, excluded=excluded, rater_count=n_raters)
