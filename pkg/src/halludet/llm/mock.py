"""Seeded offline backends for development and testing.

The completion mock draws labels from a configurable ground-truth positive
rate. Draws are pure functions of (backend seed, request seed, sample index,
point id), documented here so tests can re-derive expected vote counts with
an independent implementation:

    u = sha256("{backend_seed}\\x1f{seed}\\x1f{sample_index}\\x1f{point_key}\\x1flabel")
    label = "Hallucination" if first-8-bytes(u) / 2**64 < p_true else "Not Hallucination"

Temperature is accepted but ignored; the mock's stochasticity is entirely
seed-driven so studies stay reproducible.
"""

from __future__ import annotations

import hashlib
import threading
from typing import Callable

import numpy as np

from ..dataset import Label
from ..prompting import PromptBundle

UNPARSEABLE_TEXT = "I am not able to decide on a label for this case."


def unit_interval_draw(*parts: object) -> float:
    """Deterministic uniform draw in [0, 1) from the SHA-256 of the parts."""
    joined = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(joined.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class MockCompletionClient:
    """Offline completion backend with a configurable true positive rate.

    ``p_true`` is either a constant or a callable over the prompt bundle
    (typically keyed on ``bundle.point_key``). ``unparseable_rate`` garbles a
    fraction of replies; that draw is keyed on the prompt text, so a re-query
    with a format reminder appended gets a fresh draw.
    """

    def __init__(
        self,
        p_true: float | Callable[[PromptBundle], float] = 0.5,
        *,
        seed: int = 0,
        unparseable_rate: float = 0.0,
    ):
        self._p_true = p_true
        self.seed = seed
        self.unparseable_rate = unparseable_rate
        self.max_concurrency = 4
        self.call_count = 0
        self._lock = threading.Lock()

    def complete(
        self,
        bundle: PromptBundle,
        temperature: float,
        *,
        seed: int,
        sample_index: int,
    ) -> str:
        with self._lock:
            self.call_count += 1
        if self.unparseable_rate > 0.0:
            garble = unit_interval_draw(
                self.seed, seed, sample_index, bundle.user_text, "garble"
            )
            if garble < self.unparseable_rate:
                return UNPARSEABLE_TEXT
        p = self._p_true(bundle) if callable(self._p_true) else self._p_true
        u = unit_interval_draw(self.seed, seed, sample_index, bundle.point_key, "label")
        label = Label.HALLUCINATION if u < p else Label.NOT_HALLUCINATION
        return label.value


class MockEmbeddingClient:
    """Deterministic unit-norm embeddings derived from a hash of the text."""

    def __init__(self, dim: int = 64, *, seed: int = 0):
        if dim < 2:
            raise ValueError("embedding dimension must be >= 2")
        self.dim = dim
        self.seed = seed
        self.call_count = 0
        self._lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        with self._lock:
            self.call_count += 1
        digest = hashlib.sha256(f"{self.seed}\x1f{self.dim}\x1f{text}".encode("utf-8"))
        rng = np.random.default_rng(int.from_bytes(digest.digest()[:8], "big"))
        vector = rng.standard_normal(self.dim)
        return vector / np.linalg.norm(vector)
