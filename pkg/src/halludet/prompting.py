"""Prompt construction for zero- and few-shot hallucination classification.

Prompts are assembled from independently removable blocks so that prompt
component studies can drop any one of {examples, task definition, role
definition, concept definition} and change nothing else. Definitions live in
the system text; the case under test, the examples, and the question live in
the user text.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .dataset import DataPoint, Label, TaskType
from .errors import InvariantViolation, MissingDefinition, TaskMismatch

TEMPLATE_VERSION = "classify/v1"

TASK_DEFINITIONS: dict[TaskType, str] = {
    TaskType.DEFINITION_MODELING: (
        "The given task is Definition Modeling, meaning that the goal of the "
        "language model is to generate a definition for a specific term in the "
        "input text."
    ),
    TaskType.PARAPHRASE_GENERATION: (
        "The given task is Paraphrase Generation, meaning that the goal of the "
        "language model is to generate a paraphrase of the input text."
    ),
    TaskType.MACHINE_TRANSLATION: (
        "The given task is Machine Translation, meaning that the goal of the "
        "language model is to generate a natural language translation of the "
        "input text."
    ),
    TaskType.TEXT_SIMPLIFICATION: (
        "The given task is Text Simplification, meaning that the goal of the "
        "language model is to generate a simplified version of the input text."
    ),
}

ROLE_DEFINITIONS: dict[TaskType, str] = {
    TaskType.DEFINITION_MODELING: (
        "You are a lexicographer concerned that the generated text accurately "
        "captures the meaning of the term between the '<define>' and "
        "'</define>' delimiters in the input text."
    ),
    TaskType.PARAPHRASE_GENERATION: (
        "You are an author concerned that the generated text is an accurate "
        "paraphrase that does not distort the meaning of the input text."
    ),
    TaskType.MACHINE_TRANSLATION: (
        "You are a translator concerned that the generated text is a good and "
        "accurate translation of the input text."
    ),
    TaskType.TEXT_SIMPLIFICATION: (
        "You are an editor concerned that the generated text is short, simple, "
        "and has the same meaning as the input text."
    ),
}

CONCEPT_DEFINITION_DEFAULT = (
    "Hallucination is when a language model generates text that is not "
    "sensible, not factually correct, or not faithful to the provided input."
)

EXAMPLES_HEADER = "Here are labeled examples for this task:"
POINT_HEADER = "Classify the following case."
ANSWER_INSTRUCTION = (
    "Is the generated text a hallucination? Answer with exactly one of the "
    'labels "Hallucination" or "Not Hallucination" as the last line of your '
    "reply."
)
FORMAT_REMINDER = (
    'Reminder: answer with exactly "Hallucination" or "Not Hallucination" as '
    "the last line of your reply."
)


@dataclass(frozen=True)
class DefinitionSet:
    """Task, role, and concept definitions; one concept shared by all tasks."""

    task_definitions: Mapping[TaskType, str]
    role_definitions: Mapping[TaskType, str]
    concept_definition: str = CONCEPT_DEFINITION_DEFAULT

    @staticmethod
    def defaults() -> "DefinitionSet":
        return DefinitionSet(dict(TASK_DEFINITIONS), dict(ROLE_DEFINITIONS))

    def task_for(self, task: TaskType) -> str:
        text = self.task_definitions.get(task, "")
        if not text:
            raise MissingDefinition(f"no task definition for {task.value}")
        return text

    def role_for(self, task: TaskType) -> str:
        text = self.role_definitions.get(task, "")
        if not text:
            raise MissingDefinition(f"no role definition for {task.value}")
        return text

    def concept(self) -> str:
        if not self.concept_definition:
            raise MissingDefinition("concept definition is empty")
        return self.concept_definition


@dataclass(frozen=True)
class PromptLayout:
    """Layout choices the template leaves open."""

    examples_before_point: bool = True
    positives_first: bool = True


DEFAULT_LAYOUT = PromptLayout()


@dataclass(frozen=True)
class PromptVariant:
    """Which prompt blocks to include; used by the component-removal study."""

    name: str = "full"
    include_examples: bool = True
    include_task_definition: bool = True
    include_role_definition: bool = True
    include_concept_definition: bool = True


FULL_PROMPT = PromptVariant()


def ablation_sequence() -> list[PromptVariant]:
    """Cumulative removal order: examples, task, role, then concept."""
    return [
        FULL_PROMPT,
        PromptVariant("no_examples", include_examples=False),
        PromptVariant(
            "no_task_definition",
            include_examples=False,
            include_task_definition=False,
        ),
        PromptVariant(
            "no_role_definition",
            include_examples=False,
            include_task_definition=False,
            include_role_definition=False,
        ),
        PromptVariant(
            "no_concept_definition",
            include_examples=False,
            include_task_definition=False,
            include_role_definition=False,
            include_concept_definition=False,
        ),
    ]


@dataclass(frozen=True, eq=False)
class Example:
    """A pseudo-labeled data point used as a few-shot exemplar."""

    point: DataPoint
    label: Label
    probability: float
    embedding: np.ndarray | None = None

    def __post_init__(self):
        from .classifier import majority_label  # deferred: avoids import cycle

        if self.label is not majority_label(self.probability):
            raise InvariantViolation(
                f"{self.point.id}: label {self.label.value!r} inconsistent with "
                f"probability {self.probability} under the majority rule"
            )


@dataclass(frozen=True)
class PromptBundle:
    """Rendered system/user message pair for one query.

    ``point_key`` is the id of the point under test; offline backends use it
    to address per-point behavior without parsing prompt text.
    """

    system_text: str
    user_text: str
    task: TaskType
    example_count_per_label: int
    point_key: str = ""

    def messages(self) -> list[dict[str, str]]:
        messages = []
        if self.system_text:
            messages.append({"role": "system", "content": self.system_text})
        messages.append({"role": "user", "content": self.user_text})
        return messages


def _point_fields(dp: DataPoint) -> str:
    return (
        f"Input text: {dp.input_text}\n"
        f"Target text: {dp.target_text}\n"
        f"Generated text: {dp.generated_text}"
    )


def serialize_example(example: Example) -> str:
    """Fixed example template; ends with the label string, no probability."""
    return f"{_point_fields(example.point)}\nLabel: {example.label.value}"


def order_examples(
    positives: Sequence[Example],
    negatives: Sequence[Example],
    layout: PromptLayout = DEFAULT_LAYOUT,
) -> list[Example]:
    blocks = [list(positives), list(negatives)]
    if not layout.positives_first:
        blocks.reverse()
    return blocks[0] + blocks[1]


def prompt_blocks(
    dp: DataPoint,
    examples: Sequence[Example],
    defs: DefinitionSet,
    variant: PromptVariant = FULL_PROMPT,
    layout: PromptLayout = DEFAULT_LAYOUT,
) -> tuple[list[str], list[str]]:
    """System and user block lists, in render order.

    Rendering is ``"\\n\\n".join`` over each list, so dropping a block in a
    variant removes exactly that block from the joined text.
    """
    for example in examples:
        if example.point.task is not dp.task:
            raise TaskMismatch(
                f"example {example.point.id} is {example.point.task.value}, "
                f"query point {dp.id} is {dp.task.value}"
            )

    system_blocks: list[str] = []
    if variant.include_role_definition:
        system_blocks.append(defs.role_for(dp.task))
    if variant.include_task_definition:
        system_blocks.append(defs.task_for(dp.task))
    if variant.include_concept_definition:
        system_blocks.append(defs.concept())

    examples_block = None
    if variant.include_examples and examples:
        serialized = "\n\n".join(serialize_example(e) for e in examples)
        examples_block = f"{EXAMPLES_HEADER}\n\n{serialized}"

    user_blocks: list[str] = []
    if examples_block is not None and layout.examples_before_point:
        user_blocks.append(examples_block)
    user_blocks.append(f"{POINT_HEADER}\n{_point_fields(dp)}")
    if examples_block is not None and not layout.examples_before_point:
        user_blocks.append(examples_block)
    user_blocks.append(ANSWER_INSTRUCTION)
    return system_blocks, user_blocks


def render_few_shot(
    dp: DataPoint,
    examples: Sequence[Example],
    defs: DefinitionSet,
    *,
    variant: PromptVariant = FULL_PROMPT,
    layout: PromptLayout = DEFAULT_LAYOUT,
) -> PromptBundle:
    """Render the classification prompt; an empty example list is zero-shot."""
    system_blocks, user_blocks = prompt_blocks(dp, examples, defs, variant, layout)
    if variant.include_examples and examples:
        positives = sum(1 for e in examples if e.label is Label.HALLUCINATION)
        per_label = max(positives, len(examples) - positives)
    else:
        per_label = 0
    return PromptBundle(
        system_text="\n\n".join(system_blocks),
        user_text="\n\n".join(user_blocks),
        task=dp.task,
        example_count_per_label=per_label,
        point_key=dp.id,
    )


def render_zero_shot(
    dp: DataPoint,
    defs: DefinitionSet,
    *,
    variant: PromptVariant = FULL_PROMPT,
    layout: PromptLayout = DEFAULT_LAYOUT,
) -> PromptBundle:
    return render_few_shot(dp, (), defs, variant=variant, layout=layout)


def with_format_reminder(bundle: PromptBundle) -> PromptBundle:
    return replace(bundle, user_text=f"{bundle.user_text}\n\n{FORMAT_REMINDER}")
