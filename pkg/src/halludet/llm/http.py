"""HTTP clients for any server speaking the open chat-completions wire format.

Requests are plain JSON POSTs (model, role-tagged messages, temperature);
responses are read from the first choice's message text. Retry policy:
transport failures and 5xx retry with exponential backoff, 429 retries with
the server-advised delay, 401/403 never retry.
"""

from __future__ import annotations

import logging
import os
import time
from typing import Any, Callable

import numpy as np
import requests

from ..errors import AuthError, ConfigError, RateLimitedError, TransportError
from ..prompting import PromptBundle
from .base import ModelConfig
from .cache import CostLedger, ResponseCache

logger = logging.getLogger(__name__)

BACKOFF_BASE_SECONDS = 0.5


def _resolve_api_key(cfg: ModelConfig) -> str | None:
    if not cfg.api_key_env:
        return None  # endpoint configured as unauthenticated
    key = os.environ.get(cfg.api_key_env)
    if not key:
        raise AuthError(
            f"environment variable {cfg.api_key_env} is not set; "
            "configure backend.api_key_env or run with the mock backend"
        )
    return key


class _HttpBase:
    def __init__(
        self,
        cfg: ModelConfig,
        *,
        cache: ResponseCache | None = None,
        ledger: CostLedger | None = None,
        transport: Callable[..., Any] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self.cache = cache
        self.ledger = ledger
        self._post = transport if transport is not None else requests.post
        self._sleep = sleep
        self._api_key = _resolve_api_key(cfg)
        self.max_concurrency = cfg.max_concurrency

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        return headers

    def _request_json(self, url: str, body: dict[str, Any]) -> dict[str, Any]:
        attempts = self.cfg.max_retries + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            try:
                resp = self._post(
                    url,
                    json=body,
                    headers=self._headers(),
                    timeout=self.cfg.request_timeout,
                )
            except requests.RequestException as exc:
                last_error = TransportError(f"request to {url} failed: {exc}")
                self._backoff(attempt, attempts, str(exc))
                continue

            status = resp.status_code
            if status in (401, 403):
                raise AuthError(f"{url} returned HTTP {status}")
            if status == 429:
                last_error = RateLimitedError(f"{url} returned HTTP 429")
                delay = _retry_after_seconds(resp) or _backoff_delay(attempt)
                if attempt < attempts - 1:
                    logger.warning(
                        "rate limited; retry %d/%d after %.2fs",
                        attempt + 1,
                        attempts - 1,
                        delay,
                    )
                    self._sleep(delay)
                continue
            if status >= 500:
                last_error = TransportError(f"{url} returned HTTP {status}")
                self._backoff(attempt, attempts, f"HTTP {status}")
                continue
            if status != 200:
                raise TransportError(f"{url} returned HTTP {status}: {_body_text(resp)}")
            try:
                return resp.json()
            except ValueError as exc:
                raise TransportError(f"{url} returned unparseable JSON: {exc}")

        raise last_error if last_error is not None else TransportError(
            f"request to {url} failed"
        )

    def _backoff(self, attempt: int, attempts: int, reason: str) -> None:
        if attempt < attempts - 1:
            delay = _backoff_delay(attempt)
            logger.warning(
                "transient failure (%s); retry %d/%d after %.2fs",
                reason,
                attempt + 1,
                attempts - 1,
                delay,
            )
            self._sleep(delay)

    def _record_usage(self, data: dict[str, Any]) -> None:
        if self.ledger is None:
            return
        usage = data.get("usage") or {}
        self.ledger.record(
            self.cfg.model_name,
            usage.get("prompt_tokens"),
            usage.get("completion_tokens"),
        )


def _backoff_delay(attempt: int) -> float:
    return BACKOFF_BASE_SECONDS * (2**attempt)


def _retry_after_seconds(resp: Any) -> float | None:
    try:
        raw = resp.headers.get("Retry-After")
    except AttributeError:
        return None
    if raw is None:
        return None
    try:
        return max(0.0, float(raw))
    except (TypeError, ValueError):
        return None


def _body_text(resp: Any) -> str:
    try:
        return str(resp.text)[:200]
    except Exception:
        return "<unreadable body>"


class HttpCompletionClient(_HttpBase):
    """Chat-completions client with disk caching and a cost ledger.

    The cache key includes the per-request (seed, sample_index) pair even
    though neither is sent on the wire: repeated samples of one prompt are
    independent draws server-side but must replay individually from cache.
    """

    def complete(
        self,
        bundle: PromptBundle,
        temperature: float,
        *,
        seed: int,
        sample_index: int,
    ) -> str:
        if temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {temperature}")
        body = {
            "model": self.cfg.model_name,
            "messages": bundle.messages(),
            "temperature": temperature,
        }
        key = None
        if self.cache is not None:
            key = self.cache.key_for(
                {
                    "backend": "chat",
                    "api_base": self.cfg.api_base,
                    "model": self.cfg.model_name,
                    "body": body,
                    "seed": seed,
                    "sample_index": sample_index,
                }
            )
            cached = self.cache.get(key)
            if cached is not None:
                return cached["raw_text"]

        data = self._request_json(f"{self.cfg.api_base}/chat/completions", body)
        try:
            raw_text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}")
        if not isinstance(raw_text, str):
            raise TransportError("completion content is not a string")
        self._record_usage(data)
        if self.cache is not None and key is not None:
            self.cache.put(key, {"raw_text": raw_text, "usage": data.get("usage")})
        return raw_text


class HttpEmbeddingClient(_HttpBase):
    """Embedding client; responses are normalized to unit length and cached
    by content hash so re-runs are stable."""

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        body = {"model": self.cfg.model_name, "input": text}
        key = None
        if self.cache is not None:
            key = self.cache.key_for(
                {
                    "backend": "embeddings",
                    "api_base": self.cfg.api_base,
                    "model": self.cfg.model_name,
                    "body": body,
                }
            )
            cached = self.cache.get(key)
            if cached is not None:
                return np.asarray(cached["vector"], dtype=np.float64)

        data = self._request_json(f"{self.cfg.api_base}/embeddings", body)
        try:
            vector = np.asarray(data["data"][0]["embedding"], dtype=np.float64)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed embedding response: {exc}")
        norm = float(np.linalg.norm(vector))
        if norm > 0:
            vector = vector / norm
        self._record_usage(data)
        if self.cache is not None and key is not None:
            self.cache.put(key, {"vector": vector.tolist()})
        return vector
