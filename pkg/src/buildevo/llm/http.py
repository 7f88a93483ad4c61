"""OpenAI-compatible chat-completions client with retry."""

from __future__ import annotations

import logging
import os
import threading
import time

import httpx

from buildevo.llm.base import PromptBundle, ProviderResponse, ProviderUnavailable, ResponseEmpty, extract

logger = logging.getLogger(__name__)

API_KEY_ENV = "BUILDEVO_API_KEY"
BASE_URL_ENV = "BUILDEVO_BASE_URL"
MODEL_ENV = "BUILDEVO_MODEL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4o-mini"


class HttpProvider:
    def __init__(
        self,
        base_url: str | None = None,
        model: str | None = None,
        timeout: float = 60.0,
        attempts: int = 3,
        backoff: float = 1.0,
        temperature: float = 0.7,
        max_in_flight: int = 4,
        client: httpx.Client | None = None,
        sleep=time.sleep,
    ):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self.model = model or os.environ.get(MODEL_ENV) or DEFAULT_MODEL
        # the key only ever comes from the environment
        self.api_key = os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff
        self.temperature = temperature
        self.client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _payload(self, bundle: PromptBundle) -> dict:
        return {
            "model": self.model,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user},
            ],
            "temperature": self.temperature,
        }

    def complete(self, bundle: PromptBundle) -> ProviderResponse:
        url = f"{self.base_url}/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        delay = self.backoff
        last_error = "no attempt made"
        for attempt in range(1, self.attempts + 1):
            started = time.perf_counter()
            try:
                with self._slots:
                    resp = self.client.post(url, json=self._payload(bundle), headers=headers, timeout=self.timeout)
                if resp.status_code == 200:
                    content = resp.json()["choices"][0]["message"]["content"]
                    if not content or not content.strip():
                        raise ResponseEmpty(f"empty completion for {bundle.operator}")
                    latency = (time.perf_counter() - started) * 1000
                    return ProviderResponse(content, extract(bundle, content), latency, attempt)
                last_error = f"HTTP {resp.status_code}"
            except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            logger.warning("completion attempt %d/%d failed: %s", attempt, self.attempts, last_error)
            if attempt < self.attempts:
                self._sleep(delay)
                delay *= 2
        raise ProviderUnavailable(f"{url} failed after {self.attempts} attempts ({last_error})")
