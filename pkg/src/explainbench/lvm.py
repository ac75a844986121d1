"""Vision-language completion gateway: provider registry, retry policy,
and a deterministic mock for offline end-to-end runs.

All network behavior lives here. Credentials are resolved through an
environment variable named in the config; nothing in this module reads
secrets from disk or argv.
"""

from __future__ import annotations

import base64
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import httpx

from .errors import (
    AuthError,
    DuplicateProvider,
    InvalidParameter,
    MalformedResponse,
    RateLimited,
    Timeout,
    TransientProviderError,
    UnknownProvider,
)
from .prompting.builder import PromptBundle

logger = logging.getLogger(__name__)

BACKOFF_BASE = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_JITTER = 0.2


@dataclass(frozen=True)
class LvmConfig:
    provider: str
    endpoint: str = ""
    credential_ref: str = ""
    timeout: float = 30.0
    max_retries: int = 2
    max_output_tokens: int = 512
    model: str = ""

    def __post_init__(self):
        if self.timeout <= 0:
            raise InvalidParameter("timeout must be positive")
        if self.max_retries < 0:
            raise InvalidParameter("max_retries must be >= 0")


@dataclass(frozen=True)
class LvmResult:
    text: str
    provider: str
    latency: float
    token_usage: Optional[Tuple[int, int]] = None
    retries: int = 0


MOCK_TEMPLATE = ("Model predicted {prediction}; salient region described; "
                 "verdict {verdict_hint}")


def mock_transport(bundle: PromptBundle, config: LvmConfig,
                   resolver=None) -> Tuple[str, Optional[Tuple[int, int]]]:
    """Pure function of the bundle: echoes the prediction and verdict so
    downstream metric tests have stable hypothesis strings."""
    prediction = "unknown"
    for text in bundle.stage_texts("prediction_check"):
        start = text.find('"')
        end = text.find('"', start + 1)
        if start != -1 and end != -1:
            prediction = text[start + 1:end]
            break
    reliability = " ".join(bundle.stage_texts("reliability_check"))
    verdict_hint = "match" if "matches the stated ground truth" in reliability \
        else "mismatch"
    return MOCK_TEMPLATE.format(prediction=prediction,
                                verdict_hint=verdict_hint), None


class HttpVisionTransport:
    """Chat-completions style JSON transport; images travel as base64 PNG
    data URLs. The provider schema mapping lives entirely here."""

    def __init__(self, client: Optional[httpx.Client] = None):
        self._client = client

    def __call__(self, bundle: PromptBundle, config: LvmConfig,
                 resolver: Optional[Callable[[str], bytes]]):
        if not config.credential_ref:
            raise AuthError("no credential_ref configured")
        secret = os.environ.get(config.credential_ref)
        if not secret:
            raise AuthError(
                f"environment variable {config.credential_ref} is not set"
            )
        if resolver is None:
            raise InvalidParameter("image resolver required for HTTP provider")

        content = []
        for part in bundle.parts:
            if part.kind == "text":
                content.append({"type": "text", "text": part.content})
            else:
                encoded = base64.b64encode(resolver(part.content)).decode()
                content.append({
                    "type": "image_url",
                    "image_url": {"url": f"data:image/png;base64,{encoded}"},
                })
        payload = {
            "messages": [{"role": "user", "content": content}],
            "max_tokens": config.max_output_tokens,
        }
        if config.model:
            payload["model"] = config.model
        logger.debug("lvm request to %s: %d parts (credentials redacted)",
                     config.endpoint, len(content))

        client = self._client or httpx.Client(timeout=config.timeout)
        try:
            response = client.post(
                config.endpoint, json=payload,
                headers={"Authorization": f"Bearer {secret}"},
                timeout=config.timeout,
            )
        except httpx.TimeoutException as exc:
            raise Timeout(str(exc)) from exc
        except httpx.TransportError as exc:
            raise TransientProviderError(str(exc)) from exc
        finally:
            if self._client is None:
                client.close()

        if response.status_code in (401, 403):
            raise AuthError(f"provider returned {response.status_code}")
        if response.status_code == 429:
            raise RateLimited("provider rate limit")
        if response.status_code >= 500:
            raise TransientProviderError(
                f"provider returned {response.status_code}"
            )
        if response.status_code != 200:
            raise MalformedResponse(
                f"unexpected status {response.status_code}"
            )
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except Exception as exc:
            raise MalformedResponse(f"cannot parse provider body: {exc}") from exc
        if not text:
            raise MalformedResponse("provider returned empty text")
        usage = body.get("usage")
        token_usage = None
        if isinstance(usage, dict) and "prompt_tokens" in usage:
            token_usage = (int(usage.get("prompt_tokens", 0)),
                           int(usage.get("completion_tokens", 0)))
        logger.debug("lvm response: %d chars", len(text))
        return text, token_usage


class LvmGateway:
    """Provider registry plus retry/backoff and a per-provider concurrency
    cap. Transports raise typed errors; only transient ones are retried."""

    def __init__(self, blob_resolver: Optional[Callable[[str], bytes]] = None,
                 sleep: Callable[[float], None] = time.sleep,
                 rng: Optional[random.Random] = None,
                 concurrent_limit: int = 4):
        self._providers: dict = {}
        self._limits: dict = {}
        self._lock = threading.Lock()
        self._resolver = blob_resolver
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._concurrent_limit = concurrent_limit

    def register_provider(self, provider_id: str, transport) -> None:
        with self._lock:
            if provider_id in self._providers:
                raise DuplicateProvider(provider_id)
            self._providers[provider_id] = transport
            self._limits[provider_id] = threading.BoundedSemaphore(
                self._concurrent_limit)

    def complete(self, bundle: PromptBundle, config: LvmConfig) -> LvmResult:
        with self._lock:
            transport = self._providers.get(config.provider)
            limit = self._limits.get(config.provider)
        if transport is None:
            raise UnknownProvider(config.provider)

        attempts = config.max_retries + 1
        with limit:
            for attempt in range(attempts):
                started = time.monotonic()
                try:
                    text, usage = transport(bundle, config, self._resolver)
                except (RateLimited, TransientProviderError, Timeout) as exc:
                    if attempt == attempts - 1:
                        raise
                    delay = BACKOFF_BASE * (BACKOFF_FACTOR ** attempt)
                    jitter = 1.0 + self._rng.uniform(-BACKOFF_JITTER,
                                                     BACKOFF_JITTER)
                    logger.debug("retrying %s after %s (attempt %d)",
                                 config.provider, exc, attempt + 1)
                    self._sleep(delay * jitter)
                    continue
                if not text:
                    raise MalformedResponse("provider returned empty text")
                return LvmResult(text=text, provider=config.provider,
                                 latency=time.monotonic() - started,
                                 token_usage=usage, retries=attempt)
        raise TransientProviderError("retries exhausted")  # pragma: no cover


def default_gateway(blob_resolver=None, **kwargs) -> LvmGateway:
    """Gateway preloaded with the mock and the HTTP vision provider."""
    gateway = LvmGateway(blob_resolver=blob_resolver, **kwargs)
    gateway.register_provider("mock", mock_transport)
    gateway.register_provider("openai_vision", HttpVisionTransport())
    return gateway
