"""HTTP gateway: OpenAI-compatible completions endpoint over the router.

Blocking work (embedding, model calls, snapshot IO) runs in the server's
threadpool so requests proceed concurrently; counters and config swaps are
guarded by plain locks.
"""

from __future__ import annotations

import hmac
import json
import logging
import threading
import time
import uuid
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from starlette.concurrency import run_in_threadpool

from .config import GatewayConfig
from .costmodel import estimate_relative_cost
from .embedder import build_embedder
from .errors import (
    DegenerateEmbedding,
    EmptyText,
    IoFailure,
    LlmFailure,
    RemoteUnavailable,
)
from .llm_client import HttpChatClient
from .router import BANDS, Router, RouterResult
from .vector_index import VectorIndex

log = logging.getLogger("tweakcache.gateway")

LOOPBACK_HOSTS = {"127.0.0.1", "::1", "localhost", "testclient"}


class StatsRegistry:
    """Per-process request counters; every mutation happens under one lock."""

    def __init__(self, cost_ratio: float):
        self._mutex = threading.Lock()
        self._started = time.monotonic()
        self.cost_ratio = cost_ratio
        self.paths = {"exact": 0, "hit": 0, "miss": 0}
        self.bands = {band.label: 0 for band in BANDS}
        self.tokens = {
            "big": {"requests": 0, "prompt_tokens": 0, "completion_tokens": 0},
            "small": {"requests": 0, "prompt_tokens": 0, "completion_tokens": 0},
        }
        self.spend = {"big": 0.0, "small": 0.0}
        self.any_approximate = False

    def record(self, result: RouterResult, rates: dict) -> None:
        t = result.telemetry
        served_by = t.get("served_by")
        with self._mutex:
            self.paths[result.decision.path] += 1
            if result.decision.path in ("exact", "hit") and result.decision.band:
                self.bands[result.decision.band.label] += 1
            if served_by in self.tokens:
                bucket = self.tokens[served_by]
                bucket["requests"] += 1
                bucket["prompt_tokens"] += t.get("prompt_tokens", 0)
                bucket["completion_tokens"] += t.get("completion_tokens", 0)
                in_rate, out_rate = rates[served_by]
                self.spend[served_by] += (
                    t.get("prompt_tokens", 0) * in_rate
                    + t.get("completion_tokens", 0) * out_rate
                )
                if t.get("tokens_approximate"):
                    self.any_approximate = True

    def snapshot(self) -> dict:
        with self._mutex:
            total = sum(self.paths.values())
            exact, hit = self.paths["exact"], self.paths["hit"]
            if total:
                cost = estimate_relative_cost(hit / total, self.cost_ratio, exact / total)
                hit_rate = (exact + hit) / total
            else:
                cost, hit_rate = 1.0, 0.0
            return {
                "total_requests": total,
                "paths": dict(self.paths),
                "bands": dict(self.bands),
                "hit_rate": hit_rate,
                "estimated_relative_cost": cost,
                "cost_ratio": self.cost_ratio,
                "uptime_seconds": time.monotonic() - self._started,
                "token_usage": {k: dict(v) for k, v in self.tokens.items()},
                "spend": {**self.spend, "approximate": self.any_approximate},
            }


def _error(status: int, code: str, message: str, headers: dict | None = None) -> JSONResponse:
    return JSONResponse(
        {"error": {"code": code, "message": message}}, status_code=status, headers=headers
    )


def _first_user_prompt(body: dict):
    """Pull the prompt out of a chat-completion body, or an error response."""
    messages = body.get("messages")
    if not isinstance(messages, list) or not messages:
        return None, _error(400, "missing_messages", "body must contain a non-empty messages list")
    for m in messages:
        if not isinstance(m, dict) or not isinstance(m.get("content"), str):
            return None, _error(400, "missing_messages", "each message needs a role and string content")
    user_turns = [m for m in messages if m.get("role") == "user"]
    if not user_turns:
        return None, _error(400, "no_user_message", "at least one user message is required")
    prompt = user_turns[0]["content"]
    if not prompt.strip():
        return None, _error(400, "empty_prompt", "the user message is empty")
    return prompt, None


def create_app(
    config: GatewayConfig,
    *,
    chat_client=None,
    embedder=None,
    index: VectorIndex | None = None,
) -> FastAPI:
    embedder = embedder if embedder is not None else build_embedder(config.embedder)
    index = index if index is not None else VectorIndex(config.index)
    chat_client = chat_client if chat_client is not None else HttpChatClient()
    router = Router(config.router, embedder, index, chat_client, config.big, config.small)
    stats = StatsRegistry(config.effective_cost_ratio())
    rates = {
        "big": (config.big.input_cost_per_token, config.big.output_cost_per_token),
        "small": (config.small.input_cost_per_token, config.small.output_cost_per_token),
    }
    config_mutex = threading.Lock()
    stop_snapshots = threading.Event()

    def _save_snapshot():
        if config.snapshot_path:
            count = index.snapshot_save(config.snapshot_path)
            log.info("snapshot saved: %d entries -> %s", count, config.snapshot_path)
            return count
        return None

    def _snapshot_loop():
        while not stop_snapshots.wait(config.snapshot_interval):
            try:
                _save_snapshot()
            except IoFailure as exc:
                log.warning("periodic snapshot failed: %s", exc)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        import os

        if config.snapshot_path and os.path.exists(config.snapshot_path) and index.size() == 0:
            count = index.snapshot_load(config.snapshot_path)
            log.info("snapshot loaded: %d entries from %s", count, config.snapshot_path)
        timer = None
        if config.snapshot_path and config.snapshot_interval > 0:
            timer = threading.Thread(target=_snapshot_loop, daemon=True)
            timer.start()
        try:
            yield
        finally:
            stop_snapshots.set()
            if timer:
                timer.join(timeout=5)
            try:
                _save_snapshot()
            except IoFailure as exc:
                log.warning("shutdown snapshot failed: %s", exc)

    app = FastAPI(title="tweakcache", lifespan=lifespan)
    app.state.router = router
    app.state.index = index
    app.state.stats = stats
    app.state.config = config

    def _admin_guard(request: Request):
        if config.admin_token:
            supplied = request.headers.get("authorization", "")
            expected = f"Bearer {config.admin_token}"
            if hmac.compare_digest(supplied, expected):
                return None
            return _error(403, "forbidden", "admin token required")
        host = request.client.host if request.client else ""
        if host in LOOPBACK_HOSTS:
            return None
        return _error(403, "forbidden", "admin endpoints are loopback-only without a token")

    @app.get("/healthz")
    async def healthz():
        return PlainTextResponse("ok")

    @app.post("/v1/chat/completions")
    async def completions(request: Request):
        raw = await request.body()
        try:
            body = json.loads(raw)
        except ValueError:
            return _error(400, "invalid_json", "request body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "invalid_json", "request body must be a JSON object")
        prompt, err = _first_user_prompt(body)
        if err is not None:
            return err
        try:
            result = await run_in_threadpool(router.handle_query, prompt)
        except RemoteUnavailable as exc:
            headers = {}
            if exc.retry_after is not None:
                headers["retry-after"] = str(exc.retry_after)
            return _error(503, "embedder_unavailable", str(exc), headers=headers)
        except (EmptyText, DegenerateEmbedding) as exc:
            return _error(400, "invalid_prompt", str(exc))
        except LlmFailure as exc:
            return _error(502, "upstream_failure", str(exc))

        stats.record(result, rates)
        t = result.telemetry
        served_models = {
            "cache": config.big.model_name,
            "big": config.big.model_name,
            "small": config.small.model_name,
        }
        payload = {
            "id": f"chatcmpl-{uuid.uuid4().hex[:24]}",
            "object": "chat.completion",
            "created": int(time.time()),
            "model": body.get("model") or served_models[t["served_by"]],
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": result.response_text},
                "finish_reason": "stop",
            }],
            "usage": {
                "prompt_tokens": t["prompt_tokens"],
                "completion_tokens": t["completion_tokens"],
                "total_tokens": t["prompt_tokens"] + t["completion_tokens"],
            },
        }
        headers = {
            "x-cache-status": result.decision.path,
            "x-served-by": t["served_by"],
        }
        if result.decision.path in ("exact", "hit") and result.decision.similarity is not None:
            headers["x-cache-similarity"] = f"{result.decision.similarity:.10f}"
        return JSONResponse(payload, headers=headers)

    @app.get("/admin/stats")
    async def admin_stats(request: Request):
        denied = _admin_guard(request)
        if denied is not None:
            return denied
        return JSONResponse(stats.snapshot())

    @app.put("/admin/config")
    async def admin_config(request: Request):
        denied = _admin_guard(request)
        if denied is not None:
            return denied
        try:
            body = json.loads(await request.body())
        except ValueError:
            return _error(400, "invalid_json", "request body is not valid JSON")
        if not isinstance(body, dict) or set(body) != {"similarity_threshold"}:
            return _error(422, "invalid_threshold",
                          'body must be {"similarity_threshold": <number>}')
        value = body["similarity_threshold"]
        if not isinstance(value, (int, float)) or isinstance(value, bool) \
                or not 0.0 <= value <= 1.0:
            return _error(422, "invalid_threshold", "similarity_threshold must be in [0, 1]")
        with config_mutex:
            router.config.similarity_threshold = float(value)
        return JSONResponse({"ok": True, "similarity_threshold": float(value)})

    @app.post("/admin/snapshot")
    async def admin_snapshot(request: Request):
        denied = _admin_guard(request)
        if denied is not None:
            return denied
        raw = await request.body()
        path = config.snapshot_path
        if raw:
            try:
                body = json.loads(raw)
            except ValueError:
                return _error(400, "invalid_json", "request body is not valid JSON")
            if isinstance(body, dict) and body.get("path"):
                path = body["path"]
        if not path:
            return _error(400, "no_snapshot_path",
                          "no path given and none configured")
        try:
            count = await run_in_threadpool(index.snapshot_save, path)
        except IoFailure as exc:
            return _error(500, "snapshot_failed", str(exc))
        return JSONResponse({"ok": True, "path": str(path), "count": count})

    return app
