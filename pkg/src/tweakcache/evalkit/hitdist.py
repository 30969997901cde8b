"""Insert-half / query-half hit distribution over similarity bands."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..embedder import DEFAULT_DIMENSION, HashedEmbedder
from ..errors import EmptyDataset
from ..router import BANDS, assign_band
from ..vector_index import IndexConfig, VectorIndex


@dataclass
class HitDistribution:
    threshold: float
    inserted: int
    queried: int
    bands: dict = field(default_factory=dict)
    below_threshold: int = 0
    # only populated when the threshold sits below the 0.7 band floor
    hits_outside_bands: int = 0

    def total_binned(self) -> int:
        return self.below_threshold + self.hits_outside_bands + sum(self.bands.values())


def hit_distribution(
    prompts,
    split_fraction: float,
    *,
    threshold: float = 0.7,
    embedder=None,
) -> HitDistribution:
    """Insert the first floor(N*f) prompts, query the rest, bin top-1 sims."""
    prompts = list(prompts)
    if len(prompts) < 2:
        raise EmptyDataset("need at least 2 prompts")
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split_fraction must be strictly between 0 and 1")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")

    embedder = embedder or HashedEmbedder(DEFAULT_DIMENSION)
    n_insert = math.floor(len(prompts) * split_fraction)
    index = VectorIndex(IndexConfig(dimension=embedder.dimension))
    for prompt in prompts[:n_insert]:
        index.append(prompt, "", embedder.embed(prompt))

    dist = HitDistribution(
        threshold=threshold,
        inserted=n_insert,
        queried=len(prompts) - n_insert,
        bands={band.label: 0 for band in BANDS},
    )
    for prompt in prompts[n_insert:]:
        hits = index.search(embedder.embed(prompt), 1)
        similarity = hits[0].similarity if hits else None
        if similarity is None or similarity < threshold:
            dist.below_threshold += 1
            continue
        band = assign_band(similarity)
        if band is None:
            dist.hits_outside_bands += 1
        else:
            dist.bands[band.label] += 1
    return dist
