"""Request routing: embed, look up, compare to the threshold, dispatch.

Three outcomes per query:

* ``exact``  — similarity within epsilon of 1.0; the cached response is
  returned as-is without touching a model.
* ``hit``    — similarity at or above the threshold; the small model adapts
  the cached response to the new prompt.
* ``miss``   — everything else; the big model answers and the new pair is
  appended to the cache.

The threshold comparison is inclusive (>=) so the documented 0.7 setting
admits a similarity of exactly 0.7.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .errors import EmptyField, LlmFailure
from .llm_client import ModelEndpoint
from .prompts import TWEAK_TEMPLATE, load_prompt
from .vector_index import VectorIndex

CURRENT_PROMPT_LABEL = "User’s Current prompt:"
CACHED_PROMPT_LABEL = "Cached prompt:"
CACHED_RESPONSE_LABEL = "Cached Response:"


@dataclass
class RouterConfig:
    similarity_threshold: float = 0.7
    exact_match_epsilon: float = 1e-6
    brevity_suffix: str = "answer briefly"
    suffix_in_embedding: bool = False
    top_k: int = 1

    def __post_init__(self):
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must be in [0, 1]")
        if self.exact_match_epsilon < 0:
            raise ValueError("exact_match_epsilon must be >= 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass(frozen=True)
class SimilarityBand:
    lower: float
    upper: float
    label: str
    upper_inclusive: bool = False

    def contains(self, similarity: float) -> bool:
        if self.upper_inclusive:
            return self.lower <= similarity <= self.upper
        return self.lower <= similarity < self.upper


BANDS = (
    SimilarityBand(0.7, 0.8, "0.7-0.8"),
    SimilarityBand(0.8, 0.9, "0.8-0.9"),
    SimilarityBand(0.9, 1.0, "0.9-1.0", upper_inclusive=True),
)


def assign_band(similarity: float) -> SimilarityBand | None:
    """Map a similarity to its reporting band; below 0.7 has none."""
    for band in BANDS:
        if band.contains(similarity):
            return band
    return None


@dataclass
class RoutingDecision:
    path: str                          # "exact" | "hit" | "miss"
    similarity: float | None = None
    matched_entry_id: int | None = None
    band: SimilarityBand | None = None


def decide(similarity: float | None, config: RouterConfig) -> str:
    """Classify a top-1 similarity. ``None`` (empty cache) is a miss."""
    if similarity is None:
        return "miss"
    if similarity >= 1.0 - config.exact_match_epsilon:
        return "exact"
    if similarity >= config.similarity_threshold:
        return "hit"
    return "miss"


def build_tweak_prompt(current_prompt: str, cached_prompt: str, cached_response: str) -> list:
    """Fill the adaptation template and return the chat messages for it.

    The template is a checked golden resource; the three inputs are spliced
    after their labels. The filled template rides as the system message and
    the current prompt repeats as the user turn.
    """
    for name, value in (
        ("current_prompt", current_prompt),
        ("cached_prompt", cached_prompt),
        ("cached_response", cached_response),
    ):
        if not value or not value.strip():
            raise EmptyField(f"{name} must be non-empty")
    template = load_prompt(TWEAK_TEMPLATE)
    filled = template.replace(CURRENT_PROMPT_LABEL, f"{CURRENT_PROMPT_LABEL} {current_prompt}", 1)
    filled = filled.replace(CACHED_PROMPT_LABEL, f"{CACHED_PROMPT_LABEL} {cached_prompt}", 1)
    filled = filled.replace(CACHED_RESPONSE_LABEL, f"{CACHED_RESPONSE_LABEL} {cached_response}", 1)
    return [
        {"role": "system", "content": filled},
        {"role": "user", "content": current_prompt},
    ]


@dataclass
class RouterResult:
    response_text: str
    decision: RoutingDecision
    telemetry: dict = field(default_factory=dict)


class Router:
    """Glues the embedder, the index and the two model endpoints together."""

    def __init__(
        self,
        config: RouterConfig,
        embedder,
        index: VectorIndex,
        chat_client,
        big: ModelEndpoint,
        small: ModelEndpoint,
    ):
        self.config = config
        self.embedder = embedder
        self.index = index
        self.chat = chat_client
        self.big = big
        self.small = small

    def _suffixed(self, prompt: str) -> str:
        suffix = self.config.brevity_suffix
        return f"{prompt} {suffix}" if suffix else prompt

    def handle_query(self, prompt: str) -> RouterResult:
        if not prompt or not prompt.strip():
            raise ValueError("prompt must be non-empty")
        started = time.monotonic()
        to_embed = self._suffixed(prompt) if self.config.suffix_in_embedding else prompt
        embedding = self.embedder.embed(to_embed)

        hits = self.index.search(embedding, self.config.top_k)
        top = hits[0] if hits else None
        similarity = top.similarity if top else None
        path = decide(similarity, self.config)
        decision = RoutingDecision(
            path=path,
            similarity=similarity,
            matched_entry_id=top.entry_id if top and path != "miss" else None,
            band=assign_band(similarity) if similarity is not None else None,
        )

        telemetry = {
            "path": path,
            "similarity": similarity,
            "band": decision.band.label if decision.band else None,
            "fallback": False,
            "retries": 0,
            "prompt_tokens": 0,
            "completion_tokens": 0,
            "tokens_approximate": False,
        }

        if path == "exact":
            entry = self.index.get(top.entry_id)
            response = entry.response_text
            telemetry["served_by"] = "cache"
        elif path == "hit":
            entry = self.index.get(top.entry_id)
            messages = build_tweak_prompt(
                self._suffixed(prompt), entry.query_text, entry.response_text
            )
            try:
                exchange = self.chat.complete(self.small, messages)
            except LlmFailure:
                # availability over savings: degrade to the miss path
                exchange = self._generate_and_cache(prompt, embedding)
                telemetry["fallback"] = True
                telemetry["served_by"] = "big"
            else:
                telemetry["served_by"] = "small"
            response = exchange.response_text
            _merge_usage(telemetry, exchange)
        else:
            exchange = self._generate_and_cache(prompt, embedding)
            response = exchange.response_text
            telemetry["served_by"] = "big"
            _merge_usage(telemetry, exchange)

        telemetry["latency_seconds"] = time.monotonic() - started
        return RouterResult(response_text=response, decision=decision, telemetry=telemetry)

    def _generate_and_cache(self, prompt: str, embedding):
        messages = [{"role": "user", "content": self._suffixed(prompt)}]
        exchange = self.chat.complete(self.big, messages)
        self.index.append(prompt, exchange.response_text, embedding)
        return exchange


def _merge_usage(telemetry: dict, exchange) -> None:
    telemetry["prompt_tokens"] = exchange.prompt_tokens
    telemetry["completion_tokens"] = exchange.completion_tokens
    telemetry["tokens_approximate"] = exchange.tokens_approximate
    telemetry["retries"] = exchange.retries
