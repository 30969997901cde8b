"""Traditional-cache precision/recall sweep.

For every pair, the first question is put into the cache, the second is
looked up (top-k by cosine, threshold filter, re-rank by a pluggable
scorer), the outcome is classified against the human duplicate label, and
the second question is then cached as well so the store grows over the run.
Each threshold gets its own isolated cache.

Classification: a hit on a labeled duplicate is a true positive, a hit on a
non-duplicate a false positive, and a miss on a duplicate a false negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import httpx
import numpy as np

from ..embedder import DEFAULT_DIMENSION, HashedEmbedder
from ..errors import EmptyDataset, RemoteUnavailable
from ..vector_index import IndexConfig, VectorIndex
from .datasets import LabeledPair


@dataclass
class PrPoint:
    threshold: float
    tp: int
    fp: int
    fn: int
    precision: float | None   # None when no positives were predicted
    recall: float | None      # None when the set has no duplicates


def pr_sweep(
    pairs: list[LabeledPair],
    thresholds,
    scorer=None,
    *,
    embedder=None,
    top_k: int = 5,
) -> list[PrPoint]:
    if not pairs:
        raise EmptyDataset("no pairs to sweep")
    thresholds = list(thresholds)
    if not thresholds:
        raise ValueError("at least one threshold is required")
    for t in thresholds:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"threshold {t} outside [0, 1]")
    if top_k < 1:
        raise ValueError("top_k must be >= 1")

    embedder = embedder or HashedEmbedder(DEFAULT_DIMENSION)
    vectors: dict[str, np.ndarray] = {}

    def embed(text: str) -> np.ndarray:
        if text not in vectors:
            vectors[text] = embedder.embed(text)
        return vectors[text]

    if scorer is None:
        def scorer(question: str, candidate: str) -> float:
            return float(np.dot(embed(question).astype(np.float64),
                                embed(candidate).astype(np.float64)))

    points = []
    for threshold in thresholds:
        index = VectorIndex(IndexConfig(dimension=embedder.dimension))
        tp = fp = fn = 0
        for pair in pairs:
            index.append(pair.question_1, "", embed(pair.question_1))
            hits = index.search(embed(pair.question_2), top_k)
            candidates = [h for h in hits if h.similarity >= threshold]
            hit = bool(candidates)
            if candidates:
                # the re-ranker picks which entry answers (ties keep
                # retrieval order); the counts depend only on hit/miss
                max(candidates,
                    key=lambda h: scorer(pair.question_2, index.get(h.entry_id).query_text))
            if hit and pair.is_duplicate:
                tp += 1
            elif hit and not pair.is_duplicate:
                fp += 1
            elif not hit and pair.is_duplicate:
                fn += 1
            index.append(pair.question_2, "", embed(pair.question_2))
        precision = tp / (tp + fp) if (tp + fp) else None
        recall = tp / (tp + fn) if (tp + fn) else None
        points.append(PrPoint(threshold=float(threshold), tp=tp, fp=fp, fn=fn,
                              precision=precision, recall=recall))
    return points


def make_http_scorer(url: str, timeout: float = 10.0, client: httpx.Client | None = None):
    """Adapter for remote re-rankers: POST {question, candidate} -> {score}."""
    http = client or httpx.Client(timeout=timeout)

    def scorer(question: str, candidate: str) -> float:
        try:
            resp = http.post(url, json={"question": question, "candidate": candidate})
        except httpx.HTTPError as exc:
            raise RemoteUnavailable(f"re-ranker request failed: {exc}")
        if resp.status_code != 200:
            raise RemoteUnavailable(f"re-ranker returned {resp.status_code}")
        try:
            return float(resp.json()["score"])
        except (ValueError, KeyError, TypeError):
            raise RemoteUnavailable("re-ranker response missing a numeric score")

    return scorer
