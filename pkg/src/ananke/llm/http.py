"""OpenAI-compatible chat-completion backend."""

from __future__ import annotations

import logging
import os
import time
from typing import Callable

import requests

from ..errors import LlmTransport, LlmTimeout
from .base import Completion, TokenUsage

log = logging.getLogger(__name__)

ENV_URL = "ANANKE_LLM_URL"
ENV_MODEL = "ANANKE_LLM_MODEL"
ENV_KEY = "ANANKE_LLM_KEY"

_RETRYABLE = {429, 500, 502, 503, 504}


class HttpChatBackend:
    """POSTs ``{model, messages, temperature}`` to ``<base_url>/chat/completions``.

    429 and 5xx responses are retried with exponential backoff, at most
    ``max_retries`` times; other failures surface immediately.
    """

    def __init__(self, base_url: str, model: str, api_key: str = "", temperature: float = 0.0,
                 timeout: float = 120.0, max_retries: int = 3, backoff_base: float = 1.0,
                 backoff_cap: float = 30.0, session: requests.Session | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.session = session or requests.Session()
        self._sleep = sleep
        self.id = f"http:{model}"

    @classmethod
    def from_env(cls, **kwargs) -> "HttpChatBackend":
        url, model = os.environ.get(ENV_URL), os.environ.get(ENV_MODEL)
        if not url or not model:
            raise LlmTransport(None, f"{ENV_URL} and {ENV_MODEL} must be set")
        return cls(url, model, os.environ.get(ENV_KEY, ""), **kwargs)

    @property
    def endpoint(self) -> str:
        if self.base_url.endswith("/chat/completions"):
            return self.base_url
        return f"{self.base_url}/chat/completions"

    def _delay(self, attempt: int, resp: requests.Response | None) -> float:
        if resp is not None and resp.headers.get("Retry-After"):
            try:
                return min(float(resp.headers["Retry-After"]), self.backoff_cap)
            except ValueError:
                pass
        return min(self.backoff_base * (2 ** attempt), self.backoff_cap)

    def complete(self, system_prompt: str, user_prompt: str) -> Completion:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
            "temperature": self.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        attempt = 0
        while True:
            try:
                resp = self.session.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
            except requests.Timeout:
                raise LlmTimeout(self.timeout) from None
            except requests.RequestException as exc:
                raise LlmTransport(None, str(exc)) from exc
            if resp.status_code == 200:
                return self._parse(resp, attempt)
            if resp.status_code in _RETRYABLE and attempt < self.max_retries:
                delay = self._delay(attempt, resp)
                log.warning("chat completion returned %s, retry %d/%d in %.1fs",
                            resp.status_code, attempt + 1, self.max_retries, delay)
                self._sleep(delay)
                attempt += 1
                continue
            raise LlmTransport(resp.status_code, resp.text[:500])

    def _parse(self, resp: requests.Response, retries: int) -> Completion:
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise LlmTransport(resp.status_code, f"unexpected response body: {exc}") from None
        usage = body.get("usage") or {}
        prompt = int(usage.get("prompt_tokens") or 0)
        completion = int(usage.get("completion_tokens") or 0)
        details = usage.get("completion_tokens_details") or {}
        reasoning = int(details.get("reasoning_tokens") or usage.get("reasoning_tokens") or 0)
        reasoning = min(reasoning, completion) if completion else reasoning
        answer = max(completion - reasoning, 0)
        return Completion(text, TokenUsage(prompt, reasoning, answer), retries)
