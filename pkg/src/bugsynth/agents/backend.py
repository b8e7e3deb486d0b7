"""Chat-completion transport for remote agent backends."""

from __future__ import annotations

import logging
import os
import time
from typing import Any, Protocol

import httpx

from bugsynth.agents.structured import AgentRequest
from bugsynth.errors import BackendError

log = logging.getLogger(__name__)


class AgentBackend(Protocol):
    kind: str
    max_retries_on_malformed: int

    def complete(self, messages: list[dict[str, str]], request: AgentRequest) -> str:
        ...


class RemoteChatBackend:
    """OpenAI-style ``/chat/completions`` client.

    The httpx client is thread-safe, so one instance can be shared by all
    campaign workers.
    """

    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str = "gpt-4o-mini",
        *,
        api_key: str | None = None,
        api_key_env: str = "OPENAI_API_KEY",
        temperature: float = 0.7,
        timeout_seconds: float = 60.0,
        max_retries_on_malformed: int = 2,
        transport_retries: int = 2,
        backoff_seconds: float = 1.0,
        client: httpx.Client | None = None,
    ) -> None:
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(api_key_env, "")
        self.temperature = temperature
        self.timeout_seconds = timeout_seconds
        self.max_retries_on_malformed = max_retries_on_malformed
        self.transport_retries = transport_retries
        self.backoff_seconds = backoff_seconds
        self._client = client or httpx.Client(timeout=timeout_seconds)

    def close(self) -> None:
        self._client.close()

    def _post(self, payload: dict[str, Any]) -> httpx.Response:
        headers = {"content-type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return self._client.post(self.url, json=payload, headers=headers, timeout=self.timeout_seconds)

    def complete(self, messages: list[dict[str, str]], request: AgentRequest) -> str:
        payload = {"model": self.model, "messages": messages, "temperature": self.temperature}
        error: BackendError | None = None
        for attempt in range(self.transport_retries + 1):
            if attempt:
                time.sleep(self.backoff_seconds * 2 ** (attempt - 1))
            try:
                resp = self._post(payload)
            except httpx.TimeoutException as exc:
                error = BackendError(f"timeout after {self.timeout_seconds:g}s calling {self.url}")
                error.__cause__ = exc
                continue
            except httpx.HTTPError as exc:
                error = BackendError(f"transport error calling {self.url}: {exc}")
                error.__cause__ = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                error = BackendError(f"HTTP {resp.status_code} from {self.url}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code} from {self.url}: {resp.text[:200]}")
            try:
                data = resp.json()
                content = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed chat-completion response from {self.url}") from exc
            if not isinstance(content, str):
                raise BackendError(f"chat-completion content is not text ({type(content).__name__})")
            return content
        assert error is not None
        log.warning("%s (request for %s)", error, request.schema)
        raise error
