"""Gateway configuration: YAML file plus environment overrides."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import yaml

from .costmodel import DEFAULT_COST_RATIO
from .embedder import EmbedderConfig
from .llm_client import ModelEndpoint
from .router import RouterConfig
from .vector_index import IndexConfig

ENV_THRESHOLD = "TWEAKCACHE_THRESHOLD"
ENV_LISTEN = "TWEAKCACHE_LISTEN"


@dataclass
class GatewayConfig:
    listen_address: str = "127.0.0.1:8080"
    router: RouterConfig = dataclasses.field(default_factory=RouterConfig)
    big: ModelEndpoint = None
    small: ModelEndpoint = None
    embedder: EmbedderConfig = dataclasses.field(default_factory=EmbedderConfig)
    index: IndexConfig = dataclasses.field(default_factory=IndexConfig)
    snapshot_path: str | None = None
    snapshot_interval: float = 0.0     # seconds; 0 disables the timer
    admin_token: str | None = None

    def __post_init__(self):
        if self.big is None:
            self.big = ModelEndpoint(label="big", base_url="http://big.invalid/v1",
                                     model_name="big-model")
        if self.small is None:
            self.small = ModelEndpoint(label="small", base_url="http://small.invalid/v1",
                                       model_name="small-model")
        if (self.big.label, self.small.label) != ("big", "small"):
            raise ValueError("endpoints must carry the labels big and small")
        if self.embedder.dimension != self.index.dimension:
            raise ValueError(
                f"embedder dimension {self.embedder.dimension} != "
                f"index dimension {self.index.dimension}"
            )
        if self.snapshot_interval < 0:
            raise ValueError("snapshot_interval must be >= 0")

    def effective_cost_ratio(self) -> float:
        """Small/big output-token price ratio, defaulting when unpriced."""
        big_out = self.big.output_cost_per_token
        small_out = self.small.output_cost_per_token
        if big_out > 0 and small_out >= 0:
            return small_out / big_out
        return DEFAULT_COST_RATIO


def _build(cls, section: dict, where: str, force: dict | None = None):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    merged = dict(section)
    if force:
        merged.update(force)
    return cls(**merged)


def config_from_dict(raw: dict) -> GatewayConfig:
    if not isinstance(raw, dict):
        raise ValueError("configuration must be a mapping")
    kwargs = {}
    for scalar in ("listen_address", "snapshot_path", "snapshot_interval", "admin_token"):
        if scalar in raw:
            kwargs[scalar] = raw[scalar]
    if "router" in raw:
        kwargs["router"] = _build(RouterConfig, raw["router"] or {}, "router")
    if "embedder" in raw:
        kwargs["embedder"] = _build(EmbedderConfig, raw["embedder"] or {}, "embedder")
    if "index" in raw:
        kwargs["index"] = _build(IndexConfig, raw["index"] or {}, "index")
    for label in ("big", "small"):
        if label in raw:
            kwargs[label] = _build(ModelEndpoint, raw[label] or {}, label,
                                   force={"label": label})
    extra = set(raw) - {"listen_address", "snapshot_path", "snapshot_interval",
                        "admin_token", "router", "embedder", "index", "big", "small"}
    if extra:
        raise ValueError(f"unknown top-level key(s): {', '.join(sorted(extra))}")
    return GatewayConfig(**kwargs)


def apply_env_overrides(config: GatewayConfig, environ=None) -> GatewayConfig:
    env = os.environ if environ is None else environ
    if ENV_THRESHOLD in env:
        config.router.similarity_threshold = float(env[ENV_THRESHOLD])
        if not 0.0 <= config.router.similarity_threshold <= 1.0:
            raise ValueError(f"{ENV_THRESHOLD} must be in [0, 1]")
    if ENV_LISTEN in env:
        config.listen_address = env[ENV_LISTEN]
    return config


def load_config(path, environ=None) -> GatewayConfig:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    return apply_env_overrides(config_from_dict(raw), environ)
