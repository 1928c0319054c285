"""Uniform client for the report judge and the visual-feedback explainer.

Two roles share one interface: ``judge`` (text model scoring reports) and
``explainer`` (vision-language model describing missed findings). The
gateway adds exponential-backoff retries, timeouts, a fair in-flight bound,
and a deterministic offline stub keyed by request digest or case id.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import httpx

MAX_PAYLOAD_BYTES = 20 * 1024 * 1024

JUDGE = "judge"
EXPLAINER = "explainer"

# Schema-valid "no findings" judge response, used as the optional stub
# fallback so offline runs never wedge on a missing fixture.
EMPTY_JUDGE_RESPONSE = json.dumps(
    {
        "Explanation": "No findings assessed.",
        "ClinicallySignificantErrors": {"a": [], "b": [], "c": [], "d": []},
        "MatchedFindings": [],
    }
)


class GatewayError(Exception):
    """Base class for gateway failures."""


class AuthMissingError(GatewayError):
    pass


class PayloadTooLargeError(GatewayError):
    pass


class RetriesExhaustedError(GatewayError):
    def __init__(self, msg: str, attempts: int):
        super().__init__(msg)
        self.attempts = attempts


class TransientError(GatewayError):
    """Timeout, 5xx, or rate limit: eligible for retry."""


class UnknownFixtureError(GatewayError):
    pass


@dataclass(frozen=True)
class ModelEndpointConfig:
    role: str  # judge | explainer
    model_id: str = ""
    base_url: str = ""
    auth_ref: str = ""  # name of the env var holding the API key
    timeout_seconds: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4

    def __post_init__(self):
        if self.role not in (JUDGE, EXPLAINER):
            raise ValueError(f"unknown role {self.role!r}")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


DEFAULT_JUDGE = ModelEndpointConfig(
    role=JUDGE, model_id="gpt-o3", auth_ref="RADGAME_JUDGE_API_KEY"
)
DEFAULT_EXPLAINER = ModelEndpointConfig(
    role=EXPLAINER, model_id="medgemma-4b-it", auth_ref="RADGAME_EXPLAINER_API_KEY"
)


@dataclass(frozen=True)
class ImagePayload:
    data_base64: str
    media_type: str = "image/png"

    @classmethod
    def from_bytes(cls, data: bytes, media_type: str = "image/png") -> "ImagePayload":
        return cls(base64.b64encode(data).decode("ascii"), media_type)


@dataclass(frozen=True)
class GatewayRequest:
    role: str
    prompt: str
    images: tuple[ImagePayload, ...] = ()
    case_id: Optional[str] = None

    def __post_init__(self):
        if self.role == JUDGE and self.images:
            raise ValueError("judge requests never carry images")

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.role.encode())
        h.update(b"\x00")
        h.update(self.prompt.encode())
        for img in self.images:
            h.update(b"\x00")
            h.update(img.data_base64.encode())
        return h.hexdigest()


@dataclass(frozen=True)
class GatewayResponse:
    text: str
    latency_ms: float
    attempt_count: int
    model_id: str


class StubEndpoint:
    """Deterministic offline endpoint backed by a fixture map.

    Fixtures key on request digest or case_id. Unknown keys either raise or
    return a configurable fallback text.
    """

    def __init__(self, fixtures: dict[str, str], fallback: Optional[str] = None,
                 model_id: str = "stub"):
        self.fixtures = dict(fixtures)
        self.fallback = fallback
        self.model_id = model_id

    @classmethod
    def from_file(cls, path: Union[str, Path], fallback: Optional[str] = None) -> "StubEndpoint":
        try:
            with open(path, encoding="utf-8") as f:
                fixtures = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise GatewayError(f"malformed fixture file {path}: {e}") from e
        if not isinstance(fixtures, dict) or not all(
            isinstance(v, str) for v in fixtures.values()
        ):
            raise GatewayError(f"fixture file {path} must map keys to response text")
        return cls(fixtures, fallback=fallback)

    def send(self, req: GatewayRequest) -> str:
        for key in (req.digest(), req.case_id):
            if key is not None and key in self.fixtures:
                return self.fixtures[key]
        if self.fallback is not None:
            return self.fallback
        raise UnknownFixtureError(
            f"no fixture for digest {req.digest()[:12]}... / case {req.case_id}"
        )


class HttpEndpoint:
    """Chat-completions-style HTTP endpoint."""

    def __init__(self, config: ModelEndpointConfig, client: Optional[httpx.Client] = None):
        self.config = config
        self.model_id = config.model_id
        self._client = client or httpx.Client(timeout=config.timeout_seconds)

    def send(self, req: GatewayRequest) -> str:
        key = os.environ.get(self.config.auth_ref) if self.config.auth_ref else None
        if not key:
            raise AuthMissingError(
                f"environment variable {self.config.auth_ref!r} is not set"
            )
        content: list[dict] = [{"type": "text", "text": req.prompt}]
        for img in req.images:
            content.append({
                "type": "image_url",
                "image_url": {"url": f"data:{img.media_type};base64,{img.data_base64}"},
            })
        body = {
            "model": self.config.model_id,
            "messages": [{"role": "user", "content": content}],
        }
        try:
            resp = self._client.post(
                f"{self.config.base_url.rstrip('/')}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {key}"},
            )
        except httpx.TimeoutException as e:
            raise TransientError(f"timeout: {e}") from e
        except httpx.TransportError as e:
            raise TransientError(f"transport error: {e}") from e
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"status {resp.status_code}")
        if resp.status_code == 401 or resp.status_code == 403:
            raise AuthMissingError(f"auth rejected: status {resp.status_code}")
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]


def backoff_delay(seed: int, attempt: int, base: float = 0.5, cap: float = 30.0) -> float:
    """Deterministic exponential backoff with seeded jitter.

    attempt is 0-based (delay before the first retry uses attempt 0).
    """
    jitter = random.Random(seed * 1000003 + attempt).uniform(0.0, 0.25)
    return min(cap, base * (2 ** attempt) * (1.0 + jitter))


class LlmGateway:
    """Shared, thread-safe front door to the judge and explainer.

    In-flight requests per role are bounded by a fair semaphore; transient
    failures retry with deterministic exponential backoff. The clock and
    sleep functions are injectable so retry schedules are testable without
    wall-clock delays.
    """

    def __init__(
        self,
        endpoints: dict[str, object],
        configs: Optional[dict[str, ModelEndpointConfig]] = None,
        seed: int = 0,
        sleep_fn: Callable[[float], None] = time.sleep,
        clock_fn: Callable[[], float] = time.monotonic,
    ):
        self._endpoints = dict(endpoints)
        self._configs = dict(configs or {})
        self._seed = seed
        self._sleep = sleep_fn
        self._clock = clock_fn
        self._semaphores = {
            role: threading.BoundedSemaphore(
                self._configs[role].max_in_flight if role in self._configs else 4
            )
            for role in self._endpoints
        }

    @classmethod
    def stubbed(
        cls,
        fixtures: Optional[dict[str, str]] = None,
        fallback: Optional[str] = EMPTY_JUDGE_RESPONSE,
    ) -> "LlmGateway":
        """Fully offline gateway; both roles answer from the fixture map."""
        stub = StubEndpoint(fixtures or {}, fallback=fallback)
        return cls({JUDGE: stub, EXPLAINER: stub}, sleep_fn=lambda s: None)

    def complete(self, req: GatewayRequest) -> GatewayResponse:
        endpoint = self._endpoints.get(req.role)
        if endpoint is None:
            raise GatewayError(f"no endpoint configured for role {req.role!r}")
        payload_size = len(req.prompt.encode()) + sum(
            len(i.data_base64) for i in req.images
        )
        if payload_size > MAX_PAYLOAD_BYTES:
            raise PayloadTooLargeError(f"payload is {payload_size} bytes")
        config = self._configs.get(req.role)
        max_retries = config.max_retries if config else 3
        sem = self._semaphores[req.role]
        with sem:
            start = self._clock()
            attempts = 0
            while True:
                attempts += 1
                try:
                    text = endpoint.send(req)
                except TransientError as e:
                    if attempts > max_retries:
                        raise RetriesExhaustedError(
                            f"gave up after {attempts} attempts: {e}", attempts
                        ) from e
                    self._sleep(backoff_delay(self._seed, attempts - 1))
                    continue
                latency_ms = (self._clock() - start) * 1000.0
                return GatewayResponse(
                    text=text,
                    latency_ms=latency_ms,
                    attempt_count=attempts,
                    model_id=getattr(endpoint, "model_id", "unknown"),
                )
