"""OpenAI-compatible chat-completion adapter."""
from __future__ import annotations

import os
import threading
import time
from typing import Callable, Optional, Sequence

import httpx

from .base import Completion, GenerationParams, Message, ProviderError, TransientProviderError

BASE_URL_ENV = "ANCHORWORK_BASE_URL"
API_KEY_ENV = "ANCHORWORK_API_KEY"
DEFAULT_BASE_URL = "http://localhost:8000/v1"

MAX_ATTEMPTS = 3
RETRY_STATUS = {408, 429, 500, 502, 503, 504}


class ChatCompletionProvider:
    """Talks to ``{base_url}/chat/completions``.

    Transport errors and retryable HTTP statuses are retried up to
    ``MAX_ATTEMPTS`` times with exponential backoff. Anything else, including
    a malformed response body, is raised as :class:`ProviderError` for the
    calling stage to handle.
    """

    def __init__(
        self,
        model: str,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        *,
        max_in_flight: int = 8,
        timeout: float = 600.0,
        backoff: float = 1.0,
        client: Optional[httpx.Client] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.model = model
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV, DEFAULT_BASE_URL)).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.backoff = backoff
        self._sleep = sleep
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def build_payload(self, messages: Sequence[Message], params: GenerationParams) -> dict:
        # chat endpoints reject bare role=tool without a tool_call_id; executor
        # feedback goes out as a user turn with its content untouched
        wire = [{"role": "user" if m.role == "tool" else m.role, "content": m.content} for m in messages]
        return {
            "model": params.model or self.model,
            "messages": wire,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }

    def complete(
        self,
        agent_role: str,
        messages: Sequence[Message],
        params: GenerationParams,
        key: str = "",
    ) -> Completion:
        if not messages:
            raise ValueError("messages must be non-empty")
        payload = self.build_payload(messages, params)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last: Optional[Exception] = None
        for attempt in range(MAX_ATTEMPTS):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._client.post(f"{self.base_url}/chat/completions", json=payload, headers=headers)
            except httpx.TransportError as exc:
                last = TransientProviderError(f"{agent_role}: transport error: {exc}")
                continue
            if resp.status_code in RETRY_STATUS:
                last = TransientProviderError(f"{agent_role}: HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise ProviderError(f"{agent_role}: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
            except ValueError as exc:
                raise ProviderError(f"{agent_role}: response is not JSON: {exc}") from exc
            return parse_response(body)
        raise last


def parse_response(body: dict) -> Completion:
    try:
        choice = body["choices"][0]
        text = choice["message"]["content"] or ""
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderError(f"malformed chat completion response: {exc}") from exc
    usage = body.get("usage") or {}
    finish = choice.get("finish_reason") or "stop"
    if finish not in ("stop", "length"):
        finish = "stop" if finish in ("eos", "end_turn", "tool_calls") else "error"
    return Completion(
        text=text,
        tokens_in=int(usage.get("prompt_tokens", 0)),
        tokens_out=int(usage.get("completion_tokens", 0)),
        finish_reason=finish,
    )
