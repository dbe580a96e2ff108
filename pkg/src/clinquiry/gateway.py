"""Chat-completion backends: an HTTP client with retries and a scripted mock.

Every synthesis, judging, and benchmarking call goes through one of these
backends.  The scripted backend keys canned responses by a fingerprint of the
message list, which makes entire downstream pipelines bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import httpx

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


class GatewayError(Exception):
    """Base class for backend failures."""


class Timeout(GatewayError):
    pass


class AuthFailure(GatewayError):
    pass


class MalformedResponse(GatewayError):
    pass


class ScriptMiss(GatewayError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no scripted response for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got '{self.role}'")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: int | None = None

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[-1].role not in ("user", "system"):
            raise ValueError("last message role must be user or system")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


def request(model_id: str, messages: Sequence[tuple[str, str]], **kwargs) -> ChatRequest:
    """Convenience constructor from (role, content) pairs."""
    return ChatRequest(
        model_id=model_id,
        messages=tuple(ChatMessage(role, content) for role, content in messages),
        **kwargs,
    )


def fingerprint(messages: Sequence[ChatMessage]) -> str:
    """Stable hash over role/content pairs only; decoding knobs don't matter."""
    canonical = json.dumps([[m.role, m.content] for m in messages], ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:32]


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    auth_token_env_var: str = ""
    request_timeout: float = 60.0
    max_retries: int = 3
    parallelism_limit: int = 4
    retry_backoff: float = 0.5

    def __post_init__(self):
        if self.parallelism_limit < 1:
            raise ValueError("parallelism_limit must be >= 1")


class _BackendBase:
    """Shared concurrency plumbing: a per-instance in-flight limit."""

    def __init__(self, parallelism_limit: int):
        self.parallelism_limit = max(1, parallelism_limit)
        self._slots = threading.Semaphore(self.parallelism_limit)

    def complete(self, req: ChatRequest) -> str:
        with self._slots:
            return self._complete(req)

    def _complete(self, req: ChatRequest) -> str:  # pragma: no cover - abstract
        raise NotImplementedError


class HttpBackend(_BackendBase):
    """POSTs to ``<base_url>/chat/completions`` and reads the first choice.

    Transient failures (timeouts, connection errors, 429/5xx) are retried
    with exponential backoff up to ``max_retries``; auth and parse failures
    are not.
    """

    def __init__(self, config: BackendConfig, *, transport: httpx.BaseTransport | None = None):
        super().__init__(config.parallelism_limit)
        self.config = config
        self.stats = {"requests": 0, "retries": 0}
        self._client = httpx.Client(
            timeout=config.request_timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_token_env_var:
            token = os.environ.get(self.config.auth_token_env_var, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _complete(self, req: ChatRequest) -> str:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": req.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.seed is not None:
            body["seed"] = req.seed

        self.stats["requests"] += 1
        last_exc: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self.stats["retries"] += 1
                time.sleep(self.config.retry_backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(url, json=body, headers=self._headers())
            except httpx.TimeoutException as exc:
                last_exc = Timeout(f"request timed out after {self.config.request_timeout}s")
                last_exc.__cause__ = exc
                continue
            except httpx.TransportError as exc:
                last_exc = GatewayError(f"transport error: {exc}")
                last_exc.__cause__ = exc
                continue
            if resp.status_code in (401, 403):
                raise AuthFailure(f"HTTP {resp.status_code} from {url}")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_exc = GatewayError(f"HTTP {resp.status_code} from {url}")
                continue
            if resp.status_code != 200:
                raise GatewayError(f"HTTP {resp.status_code} from {url}")
            return _parse_completion(resp)
        assert last_exc is not None
        raise last_exc


def _parse_completion(resp: httpx.Response) -> str:
    try:
        payload = resp.json()
    except (json.JSONDecodeError, ValueError) as exc:
        raise MalformedResponse(f"response body is not JSON: {exc}") from exc
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"missing choices[0].message.content: {exc!r}") from exc
    if not isinstance(content, str):
        raise MalformedResponse("message content is not a string")
    return content


class ScriptedBackend(_BackendBase):
    """Deterministic mock keyed by message fingerprint.

    In strict mode a miss raises ScriptMiss; otherwise the default response
    is returned.  Script files are line-delimited JSON records of
    {"fingerprint", "response"}.
    """

    def __init__(
        self,
        script: Mapping[str, str] | Iterable[tuple[str, str]] = (),
        *,
        strict: bool = True,
        default_response: str = "",
        parallelism_limit: int = 8,
    ):
        super().__init__(parallelism_limit)
        self.script: dict[str, str] = dict(script)
        self.strict = strict
        self.default_response = default_response
        self.calls: list[str] = []
        self._lock = threading.Lock()

    def add(self, messages: Sequence[ChatMessage], response: str) -> str:
        fp = fingerprint(messages)
        self.script[fp] = response
        return fp

    def add_request(self, req: ChatRequest, response: str) -> str:
        return self.add(req.messages, response)

    def _complete(self, req: ChatRequest) -> str:
        fp = fingerprint(req.messages)
        with self._lock:
            self.calls.append(fp)
        if fp in self.script:
            return self.script[fp]
        if self.strict:
            raise ScriptMiss(fp)
        return self.default_response

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for fp, response in self.script.items():
                fh.write(json.dumps({"fingerprint": fp, "response": response}, ensure_ascii=False) + "\n")

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "ScriptedBackend":
        script = {}
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                script[rec["fingerprint"]] = rec["response"]
        return cls(script, **kwargs)


def complete(req: ChatRequest, backend) -> str:
    """Single completion; returns assistant text or raises a GatewayError."""
    return backend.complete(req)


def complete_many(requests: Sequence[ChatRequest], backend) -> list:
    """Run requests concurrently under the backend's parallelism limit.

    Results align positionally with the inputs; a failed item holds its
    exception instead of text, so one failure never aborts siblings.
    """
    if not requests:
        return []
    workers = min(len(requests), max(getattr(backend, "parallelism_limit", 1), 1))

    def run(req: ChatRequest):
        try:
            return backend.complete(req)
        except Exception as exc:  # noqa: BLE001 - per-item error capture
            return exc

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, requests))


def load_backend(path: str | Path, *, transport=None) -> tuple[object, str]:
    """Build a backend from a JSON config file; returns (backend, model_id).

    Formats:
      {"type": "http", "model": ..., "base_url": ..., "auth_token_env_var": ...,
       "request_timeout": ..., "max_retries": ..., "parallelism_limit": ...}
      {"type": "scripted", "model": ..., "script_path": ..., "strict": true}
    Auth tokens come only from the named environment variable, never from
    the file itself.
    """
    path = Path(path)
    cfg = json.loads(path.read_text(encoding="utf-8"))
    kind = cfg.get("type", "http")
    model_id = cfg.get("model", "")
    if kind == "http":
        config = BackendConfig(
            base_url=cfg["base_url"],
            auth_token_env_var=cfg.get("auth_token_env_var", ""),
            request_timeout=float(cfg.get("request_timeout", 60.0)),
            max_retries=int(cfg.get("max_retries", 3)),
            parallelism_limit=int(cfg.get("parallelism_limit", 4)),
            retry_backoff=float(cfg.get("retry_backoff", 0.5)),
        )
        return HttpBackend(config, transport=transport), model_id
    if kind == "scripted":
        script_path = Path(cfg["script_path"])
        if not script_path.is_absolute():
            script_path = path.parent / script_path
        backend = ScriptedBackend.from_file(
            script_path,
            strict=bool(cfg.get("strict", True)),
            default_response=cfg.get("default_response", ""),
            parallelism_limit=int(cfg.get("parallelism_limit", 8)),
        )
        return backend, model_id
    raise ValueError(f"unknown backend type '{kind}'")
