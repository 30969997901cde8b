"""tweakcache: a semantic response cache for chat LLMs.

Prompts are embedded and looked up in a local vector index; close-enough
matches are adapted to the new prompt by a small model instead of paying for
a frontier-model generation, and exact repeats come straight from the cache.
Ships with an OpenAI-compatible gateway and an evaluation CLI.
"""

from .config import GatewayConfig, load_config
from .costmodel import estimate_relative_cost
from .embedder import (
    EmbedderConfig,
    HashedEmbedder,
    RemoteEmbedder,
    build_embedder,
    cosine_similarity,
    embed_text,
)
from .llm_client import ChatExchange, HttpChatClient, ModelEndpoint, scripted_mock
from .router import (
    BANDS,
    Router,
    RouterConfig,
    RoutingDecision,
    SimilarityBand,
    assign_band,
    build_tweak_prompt,
    decide,
)
from .vector_index import CacheEntry, IndexConfig, SearchHit, VectorIndex

__version__ = "0.1.0"

__all__ = [
    "GatewayConfig",
    "load_config",
    "estimate_relative_cost",
    "EmbedderConfig",
    "HashedEmbedder",
    "RemoteEmbedder",
    "build_embedder",
    "cosine_similarity",
    "embed_text",
    "ChatExchange",
    "HttpChatClient",
    "ModelEndpoint",
    "scripted_mock",
    "BANDS",
    "Router",
    "RouterConfig",
    "RoutingDecision",
    "SimilarityBand",
    "assign_band",
    "build_tweak_prompt",
    "decide",
    "CacheEntry",
    "IndexConfig",
    "SearchHit",
    "VectorIndex",
    "__version__",
]
