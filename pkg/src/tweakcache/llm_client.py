"""Chat-completion clients for the big and small model endpoints.

Both real and scripted clients expose the same ``complete(endpoint,
messages)`` call so the router never knows which one it is talking to.
"""

from __future__ import annotations

import copy
import math
import os
import random
import threading
import time
from dataclasses import dataclass

import httpx

from .errors import MalformedResponse, ProviderError, ScriptExhausted, Timeout

VALID_ROLES = ("system", "user", "assistant")


@dataclass
class ModelEndpoint:
    label: str                     # "big" or "small"
    base_url: str
    model_name: str
    api_key_ref: str = ""          # name of the env var holding the key
    temperature: float | None = None
    timeout: float = 30.0
    input_cost_per_token: float = 0.0
    output_cost_per_token: float = 0.0

    def __post_init__(self):
        if self.label not in ("big", "small"):
            raise ValueError(f"endpoint label must be big or small, got {self.label!r}")
        if not self.base_url:
            raise ValueError("base_url must be non-empty")
        if self.input_cost_per_token < 0 or self.output_cost_per_token < 0:
            raise ValueError("token costs must be non-negative")


@dataclass
class ChatExchange:
    messages: list
    response_text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    retries: int = 0
    tokens_approximate: bool = False


def validate_messages(messages) -> None:
    if not messages:
        raise ValueError("messages must be non-empty")
    for m in messages:
        if m.get("role") not in VALID_ROLES:
            raise ValueError(f"bad message role: {m.get('role')!r}")
        if not isinstance(m.get("content"), str):
            raise ValueError("message content must be a string")
    if messages[-1]["role"] != "user":
        raise ValueError("last message must have role user")


def approx_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


class HttpChatClient:
    """OpenAI-compatible chat client with bounded retries.

    Retries at most twice, only on timeouts and 5xx, with jittered
    exponential backoff; 4xx raises immediately. The API key is resolved
    from the endpoint's env-var name at call time and only ever placed in
    the authorization header.
    """

    MAX_RETRIES = 2

    def __init__(
        self,
        transport: httpx.BaseTransport | None = None,
        backoff_base: float = 0.25,
        rng: random.Random | None = None,
        max_inflight: int = 16,
    ):
        self._client = httpx.Client(transport=transport)
        self._backoff_base = backoff_base
        self._rng = rng or random.Random()
        self._semaphore = threading.BoundedSemaphore(max_inflight)

    def close(self):
        self._client.close()

    def complete(self, endpoint: ModelEndpoint, messages) -> ChatExchange:
        validate_messages(messages)
        url = endpoint.base_url.rstrip("/") + "/chat/completions"
        body = {"model": endpoint.model_name, "messages": messages, "stream": False}
        if endpoint.temperature is not None:
            body["temperature"] = endpoint.temperature
        headers = {"content-type": "application/json"}
        key = os.environ.get(endpoint.api_key_ref) if endpoint.api_key_ref else None
        if key:
            headers["authorization"] = f"Bearer {key}"

        last_error: Exception | None = None
        with self._semaphore:
            for attempt in range(self.MAX_RETRIES + 1):
                if attempt:
                    delay = self._backoff_base * (2 ** (attempt - 1))
                    time.sleep(delay * (0.5 + self._rng.random() * 0.5))
                try:
                    resp = self._client.post(
                        url, json=body, headers=headers, timeout=endpoint.timeout
                    )
                except httpx.TimeoutException as exc:
                    last_error = Timeout(f"{endpoint.label} endpoint timed out: {exc}")
                    continue
                except httpx.HTTPError as exc:
                    raise ProviderError(0, f"transport failure: {exc}")
                if resp.status_code >= 500:
                    last_error = ProviderError(resp.status_code, resp.text)
                    continue
                if resp.status_code >= 400:
                    raise ProviderError(resp.status_code, resp.text)
                return self._parse(resp, messages, retries=attempt)
        assert last_error is not None
        raise last_error

    def _parse(self, resp: httpx.Response, messages, retries: int) -> ChatExchange:
        try:
            payload = resp.json()
        except ValueError:
            raise MalformedResponse("response body is not JSON")
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponse("missing choices[0].message.content")
        if not isinstance(text, str):
            raise MalformedResponse("message content is not a string")
        usage = payload.get("usage") or {}
        prompt_tokens = usage.get("prompt_tokens")
        completion_tokens = usage.get("completion_tokens")
        approximate = prompt_tokens is None or completion_tokens is None
        if approximate:
            prompt_tokens = approx_tokens("".join(m["content"] for m in messages))
            completion_tokens = approx_tokens(text)
        return ChatExchange(
            messages=messages,
            response_text=text,
            prompt_tokens=int(prompt_tokens),
            completion_tokens=int(completion_tokens),
            retries=retries,
            tokens_approximate=approximate,
        )


@dataclass
class _ScriptEntry:
    reply: object                 # str to return, or an Exception to raise
    matcher: object = None        # None, substring, or predicate(messages)

    def matches(self, messages) -> bool:
        if self.matcher is None:
            return True
        if callable(self.matcher):
            return bool(self.matcher(messages))
        needle = str(self.matcher)
        return any(needle in m["content"] for m in messages)


class ScriptedChatClient:
    """Canned stand-in for HttpChatClient.

    The script is an ordered list whose items are either a reply, or a
    ``(matcher, reply)`` pair where the matcher is a substring of any
    message content or a predicate over the message list. Each call consumes
    the first unconsumed entry that matches; replies that are exceptions are
    raised instead of returned. Every request is recorded verbatim.
    """

    def __init__(self, script):
        if not script:
            raise ValueError("script must be non-empty")
        self._entries: list[_ScriptEntry] = []
        for item in script:
            if isinstance(item, tuple):
                matcher, reply = item
                self._entries.append(_ScriptEntry(reply=reply, matcher=matcher))
            else:
                self._entries.append(_ScriptEntry(reply=item))
        self._consumed = [False] * len(self._entries)
        self.requests: list[dict] = []
        self._mutex = threading.Lock()

    def complete(self, endpoint: ModelEndpoint, messages) -> ChatExchange:
        validate_messages(messages)
        with self._mutex:
            self.requests.append({
                "label": endpoint.label,
                "model": endpoint.model_name,
                "messages": copy.deepcopy(messages),
            })
            entry = None
            for i, candidate in enumerate(self._entries):
                if not self._consumed[i] and candidate.matches(messages):
                    self._consumed[i] = True
                    entry = candidate
                    break
        if entry is None:
            raise ScriptExhausted(f"no scripted reply left after {len(self.requests)} calls")
        if isinstance(entry.reply, Exception):
            raise entry.reply
        text = str(entry.reply)
        return ChatExchange(
            messages=messages,
            response_text=text,
            prompt_tokens=approx_tokens("".join(m["content"] for m in messages)),
            completion_tokens=approx_tokens(text),
            tokens_approximate=True,
        )

    def calls_for(self, label: str) -> list[dict]:
        with self._mutex:
            return [r for r in self.requests if r["label"] == label]


def scripted_mock(script) -> ScriptedChatClient:
    """Build a scripted mock client from an ordered reply list."""
    return ScriptedChatClient(script)


__all__ = [
    "ModelEndpoint",
    "ChatExchange",
    "HttpChatClient",
    "ScriptedChatClient",
    "scripted_mock",
    "validate_messages",
    "approx_tokens",
]
