"""Run configuration: one structured file, flag overrides, content hashing.

Every artifact a run writes embeds the hash of the semantic configuration
(field mapping, backend, classifier, selection, prompt overrides) so outputs
from different configurations cannot be mixed silently.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .classifier import ClassifierConfig
from .dataset import FieldMapping, parse_task
from .errors import ConfigError
from .prompting import (
    CONCEPT_DEFINITION_DEFAULT,
    ROLE_DEFINITIONS,
    TASK_DEFINITIONS,
    DefinitionSet,
    PromptLayout,
)
from .selection import SelectionConfig
from .util import canonical_json, sha256_hex

BACKEND_KINDS = ("mock", "http")


@dataclass(frozen=True)
class BackendConfig:
    """Model backend selection.

    ``mock`` runs fully offline from the seed. ``http`` talks to any server
    speaking the open chat-completions wire format; the API key is read from
    the environment variable named by ``api_key_env`` (empty string for
    unauthenticated local servers). ``positive_rate`` fixes the mock's
    ground-truth hallucination rate; left unset, each point gets a stable
    hash-derived rate.
    """

    kind: str = "mock"
    seed: int = 0
    embedding_dim: int = 64
    positive_rate: float | None = None
    completion_model: str = "gpt-3.5-turbo"
    embedding_model: str = "text-embedding-ada-002"
    api_base: str = "https://api.openai.com/v1"
    api_key_env: str = "LLM_API_KEY"
    request_timeout: float = 60.0
    max_retries: int = 3
    max_concurrency: int = 4
    input_cost_per_mtok: float = 0.0
    output_cost_per_mtok: float = 0.0

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"backend.kind must be one of {BACKEND_KINDS}")
        if self.embedding_dim < 2:
            raise ConfigError("backend.embedding_dim must be >= 2")
        if self.positive_rate is not None and not 0.0 <= self.positive_rate <= 1.0:
            raise ConfigError("backend.positive_rate must be in [0, 1]")


@dataclass(frozen=True)
class PromptConfig:
    """Prompt text overrides and layout choices.

    ``task_definitions`` / ``role_definitions`` override individual tasks,
    keyed by task code ("DM") or full name; unset tasks keep the built-in
    defaults.
    """

    concept_definition: str = CONCEPT_DEFINITION_DEFAULT
    task_definitions: dict = field(default_factory=dict)
    role_definitions: dict = field(default_factory=dict)
    examples_before_point: bool = True
    positives_first: bool = True

    def definition_set(self) -> DefinitionSet:
        tasks = dict(TASK_DEFINITIONS)
        roles = dict(ROLE_DEFINITIONS)
        for raw_task, text in self.task_definitions.items():
            tasks[parse_task(raw_task)] = text
        for raw_task, text in self.role_definitions.items():
            roles[parse_task(raw_task)] = text
        return DefinitionSet(tasks, roles, concept_definition=self.concept_definition)

    def layout(self) -> PromptLayout:
        return PromptLayout(
            examples_before_point=self.examples_before_point,
            positives_first=self.positives_first,
        )


@dataclass(frozen=True)
class RunConfig:
    mapping: FieldMapping = field(default_factory=FieldMapping)
    backend: BackendConfig = field(default_factory=BackendConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    prompts: PromptConfig = field(default_factory=PromptConfig)
    output_dir: str = "runs"
    cache_dir: str = ".halludet-cache"
    budget_usd: float | None = None
    figures: bool = True


def _from_mapping(cls, raw: dict, context: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{context}: expected a mapping, got {type(raw).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{context}: {exc}")


_SECTIONS = {
    "mapping": FieldMapping,
    "backend": BackendConfig,
    "classifier": ClassifierConfig,
    "selection": SelectionConfig,
    "prompts": PromptConfig,
}
_SCALARS = {"output_dir", "cache_dir", "budget_usd", "figures"}


def load_config(path: str | Path) -> RunConfig:
    """Load a YAML (or JSON) run configuration; unknown keys are rejected."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})")
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level config must be a mapping")

    unknown = set(raw) - set(_SECTIONS) - _SCALARS
    if unknown:
        raise ConfigError(f"{path}: unknown top-level keys {sorted(unknown)}")

    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in raw:
            kwargs[name] = _from_mapping(cls, raw[name], f"{path}:{name}")
    for name in _SCALARS:
        if name in raw:
            kwargs[name] = raw[name]
    return RunConfig(**kwargs)


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 over the semantic configuration (paths and cosmetics excluded)."""
    semantic = {
        "mapping": dataclasses.asdict(cfg.mapping),
        "backend": dataclasses.asdict(cfg.backend),
        "classifier": dataclasses.asdict(cfg.classifier),
        "selection": dataclasses.asdict(cfg.selection),
        "prompts": dataclasses.asdict(cfg.prompts),
    }
    return sha256_hex(canonical_json(semantic))


def short_hash(cfg: RunConfig) -> str:
    return config_hash(cfg)[:12]
