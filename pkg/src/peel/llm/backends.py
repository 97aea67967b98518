"""Chat-completion backends: an OpenAI-compatible HTTP client and a scripted mock."""

from __future__ import annotations

import json
import logging
import os
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Protocol

import httpx

from ..canon import canonical_json, digest
from ..errors import BackendError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 4096
    seed: Optional[int] = None


@dataclass(frozen=True)
class CallContext:
    """Where a call sits in the pipeline; real backends ignore it."""

    task_kind: str
    input_hash: str
    role: str  # worker_a | worker_b | integrator
    stage: str
    attempt: int = 0


class LlmBackend(Protocol):
    identity: str

    def complete(
        self,
        prompt: str,
        system: str,
        params: GenerationParams,
        context: Optional[CallContext] = None,
    ) -> str: ...


class OpenAICompatBackend:
    """Client for any ``/chat/completions`` endpoint speaking the OpenAI wire format.

    Transport errors, 429 and 5xx responses are retried with exponential
    backoff up to ``retry_limit`` times; anything else fails immediately.
    """

    def __init__(
        self,
        model: str,
        base_url: str,
        api_key: str,
        *,
        retry_limit: int = 3,
        backoff: float = 1.0,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.identity = model
        self.model = model
        self.retry_limit = retry_limit
        self.backoff = backoff
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"),
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout,
            transport=transport,
        )

    @classmethod
    def from_env(cls, model: str, env_prefix: str, **kwargs) -> "OpenAICompatBackend":
        """Read ``<prefix>_BASE_URL`` and ``<prefix>_API_KEY`` from the environment."""
        base_url = os.environ.get(f"{env_prefix}_BASE_URL")
        api_key = os.environ.get(f"{env_prefix}_API_KEY")
        if not base_url or not api_key:
            raise BackendError(f"set {env_prefix}_BASE_URL and {env_prefix}_API_KEY")
        return cls(model, base_url, api_key, **kwargs)

    def complete(self, prompt, system, params, context=None) -> str:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": prompt},
            ],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            body["seed"] = params.seed
        last = "no attempt made"
        for attempt in range(self.retry_limit + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post("/chat/completions", json=body)
            except httpx.TransportError as exc:
                last = f"transport error: {exc!r}"
                log.warning("%s attempt %d: %s", self.identity, attempt + 1, last)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}: {resp.text[:200]}"
                log.warning("%s attempt %d: %s", self.identity, attempt + 1, last)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"{self.identity}: HTTP {resp.status_code}: {resp.text[:500]}")
            try:
                return resp.json()["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"{self.identity}: unexpected response shape: {exc!r}") from None
        raise BackendError(f"{self.identity}: gave up after {self.retry_limit + 1} attempts; last: {last}")

    def close(self):
        self._client.close()


class MockScriptMiss(BackendError):
    """No scripted response matched a call."""


_MATCH_FIELDS = ("task_kind", "role", "stage", "attempt", "input_hash", "backend")


@dataclass
class MockScript:
    """Scripted responses, first match wins.

    Each entry may constrain any of ``task_kind``, ``role``, ``stage``,
    ``attempt``, ``input_hash``, ``backend`` (identity) and ``contains``
    (substring or list of substrings of the prompt), and supplies either
    ``response`` or ``choices``.  Non-string responses are sent as JSON.
    """

    entries: list[dict] = field(default_factory=list)
    source: str = ""

    @classmethod
    def load(cls, path) -> "MockScript":
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        entries = doc["responses"] if isinstance(doc, dict) else doc
        return cls(list(entries), str(path))

    @property
    def digest(self) -> str:
        return digest(self.entries)

    def lookup(self, context: CallContext, prompt: str, identity: str) -> dict | None:
        facts = {
            "task_kind": context.task_kind,
            "role": context.role,
            "stage": context.stage,
            "attempt": context.attempt,
            "input_hash": context.input_hash,
            "backend": identity,
        }
        for entry in self.entries:
            if any(f in entry and entry[f] != facts[f] for f in _MATCH_FIELDS):
                continue
            needles = entry.get("contains", [])
            if isinstance(needles, str):
                needles = [needles]
            if all(n in prompt for n in needles):
                return entry
        return None


class MockBackend:
    """Deterministic backend answering from a :class:`MockScript`."""

    def __init__(self, identity: str, script: MockScript, seed: int = 0):
        self.identity = identity
        self.script = script
        self.seed = seed
        self.calls: list[CallContext] = []

    def complete(self, prompt, system, params, context=None) -> str:
        if context is None:
            context = CallContext("adhoc", digest(prompt), "adhoc", "adhoc")
        self.calls.append(context)
        entry = self.script.lookup(context, prompt, self.identity)
        if entry is None:
            raise MockScriptMiss(
                f"no scripted response for backend={self.identity} task_kind={context.task_kind} "
                f"role={context.role} stage={context.stage} attempt={context.attempt} "
                f"input_hash={context.input_hash}"
            )
        if "choices" in entry:
            key = f"{self.seed}|{context.input_hash}|{context.role}|{context.stage}|{context.attempt}"
            rng = random.Random(digest(key))
            response = rng.choice(entry["choices"])
        else:
            response = entry.get("response", "")
        return response if isinstance(response, str) else canonical_json(response)
