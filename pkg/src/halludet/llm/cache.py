"""On-disk response cache and append-only cost ledger."""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import threading
import uuid
from pathlib import Path
from typing import Any

from ..errors import BudgetExceeded
from ..util import canonical_json, sha256_hex

logger = logging.getLogger(__name__)


class ResponseCache:
    """Content-addressed store for backend responses.

    Keys are the SHA-256 of the canonical request payload (backend id, model,
    full request body, and for completions the per-request seed and sample
    index), so a fully cached run replays bit-identically with zero network
    calls. Writes go through a temp file and an atomic rename.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key_for(payload: dict[str, Any]) -> str:
        return sha256_hex(canonical_json(payload))

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> dict[str, Any] | None:
        path = self._path(key)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError) as exc:
            logger.warning("ignoring unreadable cache entry %s: %s", path.name, exc)
            return None

    def put(self, key: str, value: dict[str, Any]) -> None:
        path = self._path(key)
        tmp = self.root / f".{key}.{uuid.uuid4().hex}.tmp"
        tmp.write_text(json.dumps(value, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)


class CostLedger:
    """Append-only JSON-lines record of live API usage.

    Token counts are recorded when the server reports them; cost is computed
    from the configured per-million-token prices (zero when unpriced). When a
    budget is set, crossing it raises :class:`BudgetExceeded`.
    """

    def __init__(
        self,
        path: str | Path,
        *,
        input_cost_per_mtok: float = 0.0,
        output_cost_per_mtok: float = 0.0,
        budget_usd: float | None = None,
    ):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.input_cost_per_mtok = input_cost_per_mtok
        self.output_cost_per_mtok = output_cost_per_mtok
        self.budget_usd = budget_usd
        self.total_cost_usd = 0.0
        self.total_calls = 0
        self._lock = threading.Lock()
        if self.path.exists():
            self._replay_existing()

    def _replay_existing(self) -> None:
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                continue
            self.total_cost_usd += float(row.get("cost_usd", 0.0))
            self.total_calls += 1

    def record(
        self,
        model: str,
        prompt_tokens: int | None,
        completion_tokens: int | None,
    ) -> None:
        cost = 0.0
        if prompt_tokens:
            cost += prompt_tokens / 1e6 * self.input_cost_per_mtok
        if completion_tokens:
            cost += completion_tokens / 1e6 * self.output_cost_per_mtok
        row = {
            "ts": dt.datetime.now(dt.timezone.utc).isoformat(),
            "model": model,
            "prompt_tokens": prompt_tokens,
            "completion_tokens": completion_tokens,
            "cost_usd": round(cost, 8),
        }
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(row) + "\n")
            self.total_cost_usd += cost
            self.total_calls += 1
            if self.budget_usd is not None and self.total_cost_usd > self.budget_usd:
                raise BudgetExceeded(
                    f"estimated spend ${self.total_cost_usd:.2f} exceeds the "
                    f"${self.budget_usd:.2f} budget after {self.total_calls} calls"
                )
