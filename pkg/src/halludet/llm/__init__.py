"""Provider-agnostic chat-completion and embedding clients."""

from .base import (
    CompletionClient,
    CompletionSample,
    EmbeddingClient,
    ModelConfig,
    parse_label,
)
from .cache import CostLedger, ResponseCache
from .http import HttpCompletionClient, HttpEmbeddingClient
from .mock import (
    MockCompletionClient,
    MockEmbeddingClient,
    unit_interval_draw,
)

__all__ = [
    "CompletionClient",
    "CompletionSample",
    "CostLedger",
    "EmbeddingClient",
    "HttpCompletionClient",
    "HttpEmbeddingClient",
    "MockCompletionClient",
    "MockEmbeddingClient",
    "ModelConfig",
    "ResponseCache",
    "parse_label",
    "unit_interval_draw",
]
