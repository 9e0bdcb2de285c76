"""Keyword generation with per-step top-k alternates.

Two providers are available: :class:`MockProvider` replays scripted traces
keyed by prompt hash, and :class:`HttpProvider` talks to an
OpenAI-compatible chat-completions endpoint with ``logprobs`` enabled.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from ctqe.analysis import SUBWORD_MARKERS

logger = logging.getLogger(__name__)

Q2K_INSTRUCTION = "Write keywords that are closely related to the given query."

MAX_ALTERNATES = 20


class ProviderError(RuntimeError):
    """Base class for generation failures."""


class CredentialError(ProviderError):
    pass


class TransportError(ProviderError):
    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt{'s' if attempts != 1 else ''})")
        self.attempts = attempts


class MissingLogprobsError(ProviderError):
    pass


class EmptyGenerationError(ProviderError):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_tokens: int = 16
    temperature: float = 0.0
    top_k_alternates: int = MAX_ALTERNATES

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if not 1 <= self.top_k_alternates <= MAX_ALTERNATES:
            raise ValueError(
                f"top_k_alternates must lie in [1, {MAX_ALTERNATES}], got {self.top_k_alternates}"
            )
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


def decode_token(token: str) -> str:
    """Map word-boundary markers to the spaces they stand for."""
    for marker in SUBWORD_MARKERS:
        token = token.replace(marker, " ")
    return token


@dataclass(frozen=True)
class TokenStep:
    chosen: str
    alternates: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        alts = tuple((str(t), float(lp)) for t, lp in self.alternates)
        for (_, a), (_, b) in zip(alts, alts[1:]):
            if a < b:
                raise ValueError("alternates must be sorted by descending logprob")
        object.__setattr__(self, "alternates", alts)

    def to_dict(self) -> dict:
        return {"chosen": self.chosen, "alternates": [[t, lp] for t, lp in self.alternates]}

    @classmethod
    def from_dict(cls, data: dict) -> TokenStep:
        return cls(data["chosen"], tuple((t, lp) for t, lp in data.get("alternates", ())))


def _squash_ws(text: str) -> str:
    return " ".join(text.split())


@dataclass(frozen=True)
class GenerationTrace:
    steps: tuple[TokenStep, ...]
    full_text: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        decoded = self.decoded_text
        if self.full_text is None:
            object.__setattr__(self, "full_text", decoded)
        elif _squash_ws(self.full_text) != _squash_ws(decoded):
            raise ValueError("full_text does not match the concatenated chosen tokens")

    @property
    def decoded_text(self) -> str:
        return "".join(decode_token(s.chosen) for s in self.steps)

    def to_dict(self) -> dict:
        return {"full_text": self.full_text, "steps": [s.to_dict() for s in self.steps]}

    @classmethod
    def from_dict(cls, data: dict) -> GenerationTrace:
        return cls(tuple(TokenStep.from_dict(s) for s in data["steps"]), data.get("full_text"))

    @classmethod
    def from_steps(cls, steps: Sequence[dict | TokenStep]) -> GenerationTrace:
        return cls(tuple(s if isinstance(s, TokenStep) else TokenStep.from_dict(s) for s in steps))


class Provider(Protocol):
    def complete(self, request: GenerationRequest) -> GenerationTrace: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def generate(request: GenerationRequest, provider: Provider) -> GenerationTrace:
    trace = provider.complete(request)
    if not trace.steps:
        raise EmptyGenerationError("generation truncated before any token")
    if len(trace.steps) > request.max_tokens:
        trace = GenerationTrace(trace.steps[: request.max_tokens])
    if any(len(s.alternates) > request.top_k_alternates for s in trace.steps):
        trace = GenerationTrace(
            tuple(TokenStep(s.chosen, s.alternates[: request.top_k_alternates]) for s in trace.steps)
        )
    return trace


def count_output_tokens(trace: GenerationTrace) -> int:
    return len(trace.steps)


def build_q2k_prompt(query: str, prf_passages: Sequence[str] | None = None) -> str:
    """Keyword-generation prompt, optionally preceded by numbered feedback passages."""
    parts = []
    if prf_passages:
        context = "\n".join(f"[{i}] {p}" for i, p in enumerate(prf_passages, 1))
        parts.append(f"Context passages:\n{context}\n")
    parts.append(Q2K_INSTRUCTION)
    parts.append(f"Query: {query}")
    parts.append("Keywords:")
    return "\n".join(parts)


class MockProvider:
    """Replays scripted traces.

    ``script`` maps the SHA-256 hex digest of a prompt to a list of steps
    (``{"chosen": ..., "alternates": [[token, logprob], ...]}``). The key
    ``"*"`` is used for prompts without their own entry.
    """

    def __init__(self, script: dict[str, list[dict]]):
        self.script = script
        self.calls = 0

    @classmethod
    def load(cls, path: str | Path) -> MockProvider:
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def complete(self, request: GenerationRequest) -> GenerationTrace:
        self.calls += 1
        key = prompt_hash(request.prompt)
        steps = self.script.get(key, self.script.get("*"))
        if steps is None:
            raise ProviderError(f"no scripted trace for prompt hash {key}")
        return GenerationTrace.from_steps(steps[: request.max_tokens])


def parse_chat_logprobs(payload: dict) -> GenerationTrace:
    """Turn a chat-completions response body into a trace."""
    try:
        choice = payload["choices"][0]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderError("response has no choices") from exc
    content = (choice.get("logprobs") or {}).get("content")
    if not content:
        raise MissingLogprobsError("provider returned no logprobs; candidate tokens unavailable")
    steps = []
    for entry in content:
        alts = sorted(
            ((a["token"], float(a["logprob"])) for a in entry.get("top_logprobs") or ()),
            key=lambda a: -a[1],
        )
        steps.append(TokenStep(entry["token"], tuple(alts)))
    text = (choice.get("message") or {}).get("content")
    decoded = "".join(decode_token(s.chosen) for s in steps)
    if text is not None and _squash_ws(text) != _squash_ws(decoded):
        text = None
    return GenerationTrace(tuple(steps), text)


class HttpProvider:
    """OpenAI-compatible chat-completions client with an on-disk response cache."""

    def __init__(
        self,
        endpoint: str = "https://api.openai.com/v1/chat/completions",
        model: str = "gpt-4.1-mini",
        api_key_env: str = "OPENAI_API_KEY",
        cache_dir: str | Path | None = None,
        max_retries: int = 3,
        timeout: float = 60.0,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ):
        api_key = os.environ.get(api_key_env)
        if not api_key:
            raise CredentialError(f"credential missing: set ${api_key_env}")
        self.endpoint = endpoint
        self.model = model
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.max_retries = max_retries
        self.backoff = backoff
        self._client = httpx.Client(
            timeout=timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {api_key}"},
        )

    def request_body(self, request: GenerationRequest) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "logprobs": True,
            "top_logprobs": request.top_k_alternates,
        }

    def _cache_path(self, body: dict) -> Path | None:
        if self.cache_dir is None:
            return None
        blob = json.dumps({"endpoint": self.endpoint, "body": body}, sort_keys=True)
        key = hashlib.sha256(blob.encode("utf-8")).hexdigest()
        return self.cache_dir / key[:2] / f"{key}.json"

    def _post(self, body: dict) -> dict:
        last = "unknown error"
        for attempt in range(1, self.max_retries + 1):
            try:
                resp = self._client.post(self.endpoint, json=body)
            except httpx.TransportError as exc:
                last = f"transport failure: {exc}"
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                elif resp.status_code >= 400:
                    raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    return resp.json()
            logger.warning("generation attempt %d failed: %s", attempt, last)
            if attempt < self.max_retries:
                time.sleep(self.backoff * 2 ** (attempt - 1))
        raise TransportError(last, self.max_retries)

    def complete(self, request: GenerationRequest) -> GenerationTrace:
        body = self.request_body(request)
        path = self._cache_path(body)
        if path is not None and path.exists():
            with open(path, encoding="utf-8") as fh:
                return parse_chat_logprobs(json.load(fh))
        payload = self._post(body)
        trace = parse_chat_logprobs(payload)
        if path is not None:
            _atomic_write_json(path, payload)
        return trace

    def close(self) -> None:
        self._client.close()


def _atomic_write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
    os.replace(tmp, path)

