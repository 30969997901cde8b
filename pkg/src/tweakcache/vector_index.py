"""In-process vector store with flat and IVF (inverted-file) cosine search.

Entries are append-only. Small indexes are scanned exhaustively; once the
store reaches ``ivf_activation_size`` it trains a spherical k-means coarse
quantizer and subsequent searches scan only the ``nprobe`` nearest inverted
lists. Probing all lists (nprobe = nlist) covers every row exactly once and
runs the scan over the identical candidate set as a flat search, so the two
agree exactly — a property the test suite leans on.

Similarities are accumulated in float64 even though storage is float32, and
candidate rows are always gathered in ascending row order, so rankings do not
depend on which subset of the matrix a scan happens to touch.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    FormatError,
    IoFailure,
    NonEmptyIndex,
    TooFewEntries,
)

SNAPSHOT_FORMAT = "tweakcache-snapshot"
SNAPSHOT_VERSION = 1


def utc_now_seconds() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def format_rfc3339(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_rfc3339(raw: str) -> datetime:
    # Python 3.10's fromisoformat does not accept a trailing Z.
    text = raw[:-1] + "+00:00" if raw.endswith("Z") else raw
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError("timestamp must carry a timezone")
    return ts.astimezone(timezone.utc).replace(microsecond=0)


@dataclass
class CacheEntry:
    """One cached (query, response) pair plus its embedding."""

    id: int
    query_text: str
    response_text: str
    embedding: np.ndarray
    created_at: datetime = field(default_factory=utc_now_seconds)

    def __post_init__(self):
        if not isinstance(self.id, int) or self.id < 0:
            raise ValueError("entry id must be a non-negative integer")
        if not self.query_text or not self.query_text.strip():
            raise ValueError("query_text must be non-empty")
        self.embedding = np.asarray(self.embedding, dtype=np.float32)
        if self.embedding.ndim != 1:
            raise ValueError("embedding must be one-dimensional")
        if self.created_at.tzinfo is None:
            raise ValueError("created_at must be timezone-aware")
        self.created_at = self.created_at.astimezone(timezone.utc).replace(microsecond=0)


@dataclass
class SearchHit:
    entry_id: int
    similarity: float


@dataclass
class IndexConfig:
    dimension: int = 384
    nlist: int = 64
    nprobe: int = 8
    ivf_activation_size: int = 10_000
    kmeans_iters: int = 20
    kmeans_seed: int = 0

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.nlist < 1 or self.nprobe < 1:
            raise ValueError("nlist and nprobe must be >= 1")
        if self.nprobe > self.nlist:
            raise ValueError("nprobe must not exceed nlist")
        if self.ivf_activation_size < 1:
            raise ValueError("ivf_activation_size must be >= 1")
        if self.kmeans_iters < 1:
            raise ValueError("kmeans_iters must be >= 1")


class RWLock:
    """Many readers or one writer; writers wait for the index to drain."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()

    class _Guard:
        def __init__(self, acquire, release):
            self._acquire, self._release = acquire, release

        def __enter__(self):
            self._acquire()

        def __exit__(self, *exc):
            self._release()
            return False

    def reading(self):
        return RWLock._Guard(self.acquire_read, self.release_read)

    def writing(self):
        return RWLock._Guard(self.acquire_write, self.release_write)


class VectorIndex:
    """Append-only store of CacheEntry rows with cosine top-k search."""

    def __init__(self, config: IndexConfig | None = None):
        self.config = config or IndexConfig()
        self._dim = self.config.dimension
        self._lock = RWLock()
        self._capacity = 256
        self._matrix = np.zeros((self._capacity, self._dim), dtype=np.float32)
        self._ids = np.zeros(self._capacity, dtype=np.int64)
        self._n = 0
        self._entries: dict[int, CacheEntry] = {}
        self._centroids: np.ndarray | None = None
        self._lists: list[list[int]] = []

    # -- bookkeeping -----------------------------------------------------

    def size(self) -> int:
        with self._lock.reading():
            return self._n

    @property
    def dimension(self) -> int:
        return self._dim

    @property
    def is_trained(self) -> bool:
        with self._lock.reading():
            return self._centroids is not None

    def get(self, entry_id: int) -> CacheEntry:
        with self._lock.reading():
            return self._entries[entry_id]

    def entries(self) -> list[CacheEntry]:
        with self._lock.reading():
            return [self._entries[int(i)] for i in self._ids[: self._n]]

    # -- writes ----------------------------------------------------------

    def insert(self, entry: CacheEntry) -> None:
        if entry.embedding.shape[0] != self._dim:
            raise DimensionMismatch(
                f"entry dimension {entry.embedding.shape[0]} != index dimension {self._dim}"
            )
        with self._lock.writing():
            self._insert_locked(entry)

    def append(self, query_text: str, response_text: str, embedding,
               created_at: datetime | None = None) -> CacheEntry:
        """Insert with an auto-assigned id; atomic, so concurrent callers
        never collide on ids (they may still append equivalent entries)."""
        with self._lock.writing():
            next_id = int(self._ids[: self._n].max()) + 1 if self._n else 0
            entry = CacheEntry(
                id=next_id,
                query_text=query_text,
                response_text=response_text,
                embedding=embedding,
                created_at=created_at or utc_now_seconds(),
            )
            if entry.embedding.shape[0] != self._dim:
                raise DimensionMismatch(
                    f"entry dimension {entry.embedding.shape[0]} != index dimension {self._dim}"
                )
            self._insert_locked(entry)
            return entry

    def _insert_locked(self, entry: CacheEntry) -> None:
        if entry.id in self._entries:
            raise DuplicateId(f"id {entry.id} already present")
        if self._n == self._capacity:
            self._grow()
        row = self._n
        self._matrix[row] = entry.embedding
        self._ids[row] = entry.id
        self._entries[entry.id] = entry
        self._n += 1
        if self._centroids is not None:
            cluster = int(np.argmax(self._centroids @ self._matrix[row].astype(np.float64)))
            self._lists[cluster].append(row)
        elif self._n >= self.config.ivf_activation_size and self._n >= self.config.nlist:
            self._train_locked(self.config)

    def _grow(self):
        self._capacity *= 2
        matrix = np.zeros((self._capacity, self._dim), dtype=np.float32)
        matrix[: self._n] = self._matrix[: self._n]
        self._matrix = matrix
        ids = np.zeros(self._capacity, dtype=np.int64)
        ids[: self._n] = self._ids[: self._n]
        self._ids = ids

    # -- training ----------------------------------------------------------

    def train_ivf(self, config: IndexConfig | None = None) -> None:
        cfg = config or self.config
        if cfg.dimension != self._dim:
            raise DimensionMismatch(
                f"config dimension {cfg.dimension} != index dimension {self._dim}"
            )
        with self._lock.writing():
            self._train_locked(cfg)

    def _train_locked(self, cfg: IndexConfig) -> None:
        if self._n < cfg.nlist:
            raise TooFewEntries(f"{self._n} entries < nlist {cfg.nlist}")
        self.config = cfg
        data = self._matrix[: self._n].astype(np.float64)
        centroids = _spherical_kmeans(data, cfg.nlist, cfg.kmeans_iters, cfg.kmeans_seed)
        assignment = np.argmax(data @ centroids.T, axis=1)
        lists: list[list[int]] = [[] for _ in range(cfg.nlist)]
        for row, cluster in enumerate(assignment):
            lists[int(cluster)].append(row)
        self._centroids = centroids
        self._lists = lists

    # -- search ----------------------------------------------------------

    def search(self, query, k: int, *, nprobe: int | None = None) -> list[SearchHit]:
        q64 = self._query64(query)
        with self._lock.reading():
            if self._n == 0:
                return []
            if self._centroids is None:
                rows = np.arange(self._n)
            else:
                probe = self.config.nprobe if nprobe is None else nprobe
                probe = min(probe, len(self._lists))
                sims = self._centroids @ q64
                order = np.lexsort((np.arange(len(sims)), -sims))[:probe]
                member_rows = [self._lists[int(c)] for c in order]
                flat = [r for rows_ in member_rows for r in rows_]
                if not flat:
                    return []
                rows = np.sort(np.asarray(flat, dtype=np.int64))
            return self._rank_rows(rows, q64, k)

    def search_flat(self, query, k: int) -> list[SearchHit]:
        """Exhaustive scan; the oracle the IVF path is measured against."""
        q64 = self._query64(query)
        with self._lock.reading():
            if self._n == 0:
                return []
            return self._rank_rows(np.arange(self._n), q64, k)

    def _query64(self, query) -> np.ndarray:
        q = np.asarray(query, dtype=np.float32)
        if q.ndim != 1 or q.shape[0] != self._dim:
            raise DimensionMismatch(f"query shape {q.shape}, want ({self._dim},)")
        return q.astype(np.float64)

    def _rank_rows(self, rows: np.ndarray, q64: np.ndarray, k: int) -> list[SearchHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        gathered = self._matrix[rows].astype(np.float64)
        sims = gathered @ q64
        ids = self._ids[rows]
        order = np.lexsort((ids, -sims))[:k]
        return [
            SearchHit(entry_id=int(ids[j]), similarity=float(min(1.0, max(-1.0, sims[j]))))
            for j in order
        ]

    # -- persistence -------------------------------------------------------

    def snapshot_save(self, path) -> int:
        with self._lock.reading():
            records = [self._entries[int(i)] for i in self._ids[: self._n]]
        tmp = f"{path}.tmp"
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                header = {
                    "format": SNAPSHOT_FORMAT,
                    "version": SNAPSHOT_VERSION,
                    "dimension": self._dim,
                }
                fh.write(json.dumps(header) + "\n")
                for entry in records:
                    fh.write(json.dumps({
                        "id": entry.id,
                        "query_text": entry.query_text,
                        "response_text": entry.response_text,
                        "embedding": [float(x) for x in entry.embedding],
                        "created_at": format_rfc3339(entry.created_at),
                    }, ensure_ascii=False) + "\n")
            os.replace(tmp, path)
        except OSError as exc:
            raise IoFailure(f"cannot write snapshot {path}: {exc}")
        return len(records)

    def snapshot_load(self, path) -> int:
        with self._lock.writing():
            if self._n:
                raise NonEmptyIndex("snapshot load requires an empty index")
            try:
                with open(path, encoding="utf-8") as fh:
                    lines = fh.read().splitlines()
            except OSError as exc:
                raise IoFailure(f"cannot read snapshot {path}: {exc}")
            if not lines:
                raise FormatError("missing snapshot header", 1)
            header = _parse_json_line(lines[0], 1)
            if header.get("format") != SNAPSHOT_FORMAT:
                raise FormatError("not a tweakcache snapshot", 1)
            if header.get("version") != SNAPSHOT_VERSION:
                raise FormatError(f"unsupported version {header.get('version')!r}", 1)
            if header.get("dimension") != self._dim:
                raise FormatError(
                    f"snapshot dimension {header.get('dimension')!r} != index dimension {self._dim}",
                    1,
                )
            for lineno, line in enumerate(lines[1:], start=2):
                if not line.strip():
                    raise FormatError("blank line", lineno)
                entry = _parse_entry_line(line, lineno, self._dim)
                try:
                    self._insert_locked(entry)
                except DuplicateId:
                    raise FormatError(f"duplicate id {entry.id}", lineno)
            return self._n


def _parse_json_line(line: str, lineno: int) -> dict:
    try:
        obj = json.loads(line)
    except ValueError as exc:
        raise FormatError(f"invalid JSON ({exc})", lineno)
    if not isinstance(obj, dict):
        raise FormatError("expected a JSON object", lineno)
    return obj


def _parse_entry_line(line: str, lineno: int, dimension: int) -> CacheEntry:
    obj = _parse_json_line(line, lineno)
    try:
        entry_id = obj["id"]
        query_text = obj["query_text"]
        response_text = obj["response_text"]
        embedding = obj["embedding"]
        created_raw = obj["created_at"]
    except KeyError as exc:
        raise FormatError(f"missing key {exc}", lineno)
    if not isinstance(entry_id, int) or isinstance(entry_id, bool):
        raise FormatError("id must be an integer", lineno)
    if not isinstance(query_text, str) or not isinstance(response_text, str):
        raise FormatError("query_text/response_text must be strings", lineno)
    if not isinstance(embedding, list) or len(embedding) != dimension:
        raise FormatError(f"embedding must be a list of {dimension} numbers", lineno)
    try:
        created_at = parse_rfc3339(created_raw)
    except (ValueError, TypeError, AttributeError):
        raise FormatError(f"bad created_at {created_raw!r}", lineno)
    try:
        return CacheEntry(
            id=entry_id,
            query_text=query_text,
            response_text=response_text,
            embedding=np.asarray(embedding, dtype=np.float32),
            created_at=created_at,
        )
    except ValueError as exc:
        raise FormatError(str(exc), lineno)


def _spherical_kmeans(data: np.ndarray, nlist: int, iters: int, seed: int) -> np.ndarray:
    """K-means on the unit sphere: greedy farthest-point init, fixed
    iteration count, empty clusters keep their previous centroid."""
    n = data.shape[0]
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    chosen = [first]
    # max cosine to any chosen centroid; the next seed minimizes it
    closest = data @ data[first]
    while len(chosen) < nlist:
        nxt = int(np.argmin(closest))
        chosen.append(nxt)
        closest = np.maximum(closest, data @ data[nxt])
    centroids = data[chosen].copy()
    for _ in range(iters):
        assignment = np.argmax(data @ centroids.T, axis=1)
        for c in range(nlist):
            members = data[assignment == c]
            if len(members) == 0:
                continue
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0:
                centroids[c] = mean / norm
    return centroids
