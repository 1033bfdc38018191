"""Two-stage hallucination detection for generated text.

Stage 1 pseudo-labels an unlabeled sample with a zero-shot classifier and
greedily selects confident, diverse exemplars per (task, label). Stage 2
classifies with those exemplars in the prompt, estimating the hallucination
probability as the positive-vote fraction over repeated sampled completions.
An evaluation harness scores runs against human labels (accuracy, rank
correlation, chance-corrected agreement, consensus strata) and drives
hyperparameter sweeps and prompt-component studies.
"""

from .classifier import Classification, ClassifierConfig, classify, majority_label
from .config import RunConfig, config_hash, load_config
from .dataset import (
    DataPoint,
    Dataset,
    FieldMapping,
    Label,
    LabeledDataPoint,
    TaskType,
    load_dataset,
    sample_per_task,
    stratify_by_consensus,
)
from .evaluation import EvaluationReport, RunResult, evaluate_run
from .llm import (
    MockCompletionClient,
    MockEmbeddingClient,
    ModelConfig,
    parse_label,
)
from .metrics import cohen_kappa, fleiss_kappa, spearman_rho
from .prompting import (
    DefinitionSet,
    Example,
    PromptBundle,
    render_few_shot,
    render_zero_shot,
    serialize_example,
)
from .selection import (
    ExamplePool,
    SelectionConfig,
    build_pools,
    negative_entropy,
    select_examples,
    selection_score,
)

__version__ = "0.1.0"

__all__ = [
    "Classification",
    "ClassifierConfig",
    "DataPoint",
    "Dataset",
    "DefinitionSet",
    "EvaluationReport",
    "Example",
    "ExamplePool",
    "FieldMapping",
    "Label",
    "LabeledDataPoint",
    "MockCompletionClient",
    "MockEmbeddingClient",
    "ModelConfig",
    "PromptBundle",
    "RunConfig",
    "RunResult",
    "SelectionConfig",
    "TaskType",
    "build_pools",
    "classify",
    "cohen_kappa",
    "config_hash",
    "evaluate_run",
    "fleiss_kappa",
    "load_config",
    "load_dataset",
    "majority_label",
    "negative_entropy",
    "parse_label",
    "render_few_shot",
    "render_zero_shot",
    "sample_per_task",
    "select_examples",
    "selection_score",
    "serialize_example",
    "spearman_rho",
    "stratify_by_consensus",
]
