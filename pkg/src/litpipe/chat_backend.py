"""OpenAI-compatible chat-completions client with retry/backoff.

Any object with a ``complete(messages, **params) -> str`` method can stand in
for the HTTP backend; tests and the offline pipeline use the deterministic
mock from mock_backend instead of the network.
"""

from __future__ import annotations

import logging
import os
import random
import time
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import requests

from .errors import BackendError

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})
BACKOFF_BASE = 0.5
BACKOFF_CAP = 30.0


@dataclass
class ChatBackendConfig:
    base_url: str
    model_name: str
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    parallelism: int = 1

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError(f"timeout must be positive, got {self.timeout}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {self.parallelism}")


@runtime_checkable
class ChatBackend(Protocol):
    def complete(self, messages: list[dict], **params) -> str: ...


class HTTPChatBackend:
    """POSTs to {base_url}/chat/completions with bearer auth from the named env var.

    Rate limits and transient transport failures are retried with exponential
    backoff plus jitter; malformed response bodies and other client errors are
    not. The API key is read at call time and never logged.
    """

    def __init__(self, config: ChatBackendConfig, session: requests.Session | None = None):
        self.config = config
        self._session = session or requests.Session()

    @property
    def parallelism(self) -> int:
        return self.config.parallelism

    def complete(self, messages: list[dict], **params) -> str:
        cfg = self.config
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(cfg.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {"model": cfg.model_name, "messages": messages, **params}

        attempts = cfg.max_retries + 1
        last_error = "no attempt made"
        for attempt in range(attempts):
            if attempt:
                delay = min(BACKOFF_CAP, BACKOFF_BASE * (2 ** (attempt - 1)))
                time.sleep(delay * (0.5 + random.random()))
            try:
                resp = self._session.post(url, json=body, headers=headers, timeout=cfg.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = f"transport error: {exc.__class__.__name__}"
                logger.warning("backend %s attempt %d/%d failed: %s", url, attempt + 1, attempts, last_error)
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_error = f"HTTP {resp.status_code}"
                logger.warning("backend %s attempt %d/%d got %s", url, attempt + 1, attempts, last_error)
                continue
            if resp.status_code != 200:
                raise BackendError(f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}")
            return _extract_content(resp, url)
        raise BackendError(f"{url} failed after {attempts} attempts: {last_error}")


def _extract_content(resp: requests.Response, url: str) -> str:
    try:
        payload = resp.json()
        content = payload["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"{url} returned a malformed completion body: {exc}") from exc
    if not isinstance(content, str):
        raise BackendError(f"{url} returned non-text completion content")
    return content


def as_backend(backend: ChatBackend | ChatBackendConfig) -> ChatBackend:
    """Accept either a config (wrapped in the HTTP client) or a ready backend."""
    if isinstance(backend, ChatBackendConfig):
        return HTTPChatBackend(backend)
    if hasattr(backend, "complete"):
        return backend
    raise TypeError(f"not a chat backend: {backend!r}")


def backend_parallelism(backend: ChatBackend | ChatBackendConfig) -> int:
    return max(1, int(getattr(backend, "parallelism", 1)))
