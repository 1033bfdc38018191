"""Provider-agnostic client interfaces and completion parsing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from ..dataset import Label
from ..errors import ConfigError
from ..prompting import PromptBundle


@dataclass(frozen=True)
class ModelConfig:
    """Connection settings for one model endpoint.

    ``api_key_env`` names the environment variable holding the key; an empty
    string means the endpoint needs no authentication (local servers).
    """

    model_name: str
    api_base: str = "https://api.openai.com/v1"
    api_key_env: str = "LLM_API_KEY"
    request_timeout: float = 60.0
    max_retries: int = 3
    max_concurrency: int = 4

    def __post_init__(self):
        if not self.model_name:
            raise ConfigError("model_name must be non-empty")
        if self.request_timeout <= 0:
            raise ConfigError("request_timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")


@dataclass(frozen=True)
class CompletionSample:
    """One raw model reply and its parse; ``parsed`` is None when unparseable."""

    raw_text: str
    parsed: Label | None
    temperature: float
    sample_index: int


def parse_label(raw_text: str) -> Label | None:
    """Parse a model reply into a label, scanning the final non-empty line.

    Case-insensitive; "not hallucination" is tested before "hallucination" so
    the substring cannot shadow the negative label. Returns None (a value,
    not an error) when the line matches neither.
    """
    for line in reversed(raw_text.splitlines()):
        lowered = line.strip().lower()
        if not lowered:
            continue
        if "not hallucination" in lowered:
            return Label.NOT_HALLUCINATION
        if "hallucination" in lowered:
            return Label.HALLUCINATION
        return None
    return None


@runtime_checkable
class CompletionClient(Protocol):
    """Chat-completion backend; each call is one independent draw."""

    max_concurrency: int

    def complete(
        self,
        bundle: PromptBundle,
        temperature: float,
        *,
        seed: int,
        sample_index: int,
    ) -> str: ...


@runtime_checkable
class EmbeddingClient(Protocol):
    """Text-embedding backend producing unit-norm vectors."""

    def embed(self, text: str) -> np.ndarray: ...
