"""Send prompts to a chat-completion endpoint, or to a deterministic mock.

Endpoint kinds:

``chat``
    POST ``{base_url}/chat/completions`` with ``{model, messages, temperature, max_tokens}``.
``mock-oracle``
    answers with the serialized gold output of the prompted record.
``mock-copy``
    answers with the first example response embedded in the prompt, i.e. the
    copy shortcut a model could learn if retrieval leaked the answer.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Literal, Mapping, Sequence

import httpx

from . import _http
from .errors import ConfigError, EndpointError
from .model import Record, TaskKind
from .prompting import Prompt, example_responses, serialize_gold

log = logging.getLogger(__name__)

EndpointKind = Literal["chat", "mock-oracle", "mock-copy"]


@dataclass(frozen=True)
class ModelEndpointSpec:
    kind: EndpointKind = "chat"
    base_url: str = "http://localhost:8000/v1"
    model: str = ""
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 0.5
    api_key_env: str | None = None
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.kind not in ("chat", "mock-oracle", "mock-copy"):
            raise ConfigError(f"unknown endpoint kind {self.kind!r}")
        if self.kind == "chat" and not self.model:
            raise ConfigError("chat endpoint needs a model name")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")

    @property
    def identity(self) -> str:
        if self.kind == "chat":
            return f"{self.base_url}#{self.model}"
        return self.kind

    @property
    def url(self) -> str:
        base = self.base_url.rstrip("/")
        return base if base.endswith("/chat/completions") else f"{base}/chat/completions"

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GenerationRecord:
    record_id: str
    task: TaskKind
    prompt_hash: str
    raw_generation: str
    latency: float = 0.0
    endpoint: str = ""
    error: str | None = None

    def to_json(self) -> dict:
        obj = {"id": self.record_id, "task": self.task.value, "prompt_hash": self.prompt_hash, "generation": self.raw_generation}
        if self.error is not None:
            obj["error"] = self.error
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> GenerationRecord:
        return cls(obj["id"], TaskKind.parse(obj["task"]), obj["prompt_hash"], obj["generation"], error=obj.get("error"))


def _chat_content(body) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise _http.PermanentHTTPError("response has no choices[0].message.content") from None
    if not isinstance(content, str):
        raise _http.PermanentHTTPError("message content is not text")
    return content


def generate(
    endpoint: ModelEndpointSpec,
    prompts: Sequence[Prompt],
    *,
    records: Mapping[str, Record] | None = None,
    client: httpx.Client | None = None,
) -> list[GenerationRecord]:
    """One GenerationRecord per prompt, in prompt order.

    Failures after the retry budget are recorded on the affected record (``error``
    set, empty generation) rather than raised; a missing credential raises
    ConfigError before anything is sent.
    """
    if endpoint.kind == "mock-oracle" and records is None:
        raise ConfigError("mock-oracle endpoint needs the gold records")
    headers = _http.auth_headers(endpoint.api_key_env) if endpoint.kind == "chat" else {}
    owned = client is None and endpoint.kind == "chat"
    if owned:
        client = httpx.Client()

    def one(prompt: Prompt) -> GenerationRecord:
        start = time.perf_counter()
        error = None
        text = ""
        try:
            if endpoint.kind == "mock-oracle":
                rec = records.get(prompt.record_id)
                if rec is None:
                    raise EndpointError(f"no gold record for {prompt.record_id!r}")
                text = serialize_gold(rec.gold)
            elif endpoint.kind == "mock-copy":
                responses = example_responses(prompt.rendered_text)
                text = responses[0] if responses else ""
            else:
                payload = {
                    "model": endpoint.model,
                    "messages": [{"role": "user", "content": prompt.rendered_text}],
                    "temperature": endpoint.temperature,
                    "max_tokens": endpoint.max_tokens,
                }
                body = _http.post_json(
                    client,
                    endpoint.url,
                    payload,
                    headers=headers,
                    timeout=endpoint.timeout,
                    retries=endpoint.retries,
                    backoff=endpoint.backoff,
                )
                text = _chat_content(body)
        except (_http.TransientHTTPError, _http.PermanentHTTPError, EndpointError) as exc:
            error = f"EndpointError: {exc}"
            log.error("generation failed for %s: %s", prompt.record_id, exc)
        return GenerationRecord(
            prompt.record_id,
            prompt.task,
            prompt.fingerprint,
            text,
            time.perf_counter() - start,
            endpoint.identity,
            error,
        )

    try:
        if endpoint.kind == "chat" and endpoint.max_in_flight > 1:
            with ThreadPoolExecutor(max_workers=endpoint.max_in_flight) as pool:
                return list(pool.map(one, prompts))
        return [one(p) for p in prompts]
    finally:
        if owned:
            client.close()
