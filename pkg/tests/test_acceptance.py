"""End-to-end acceptance checks.

Each test carries an ``acceptance`` marker; a summary hook in conftest prints
one PASS/FAIL line per criterion after the run. These tests favor exhaustive
deterministic workloads over sampling, so a few of them are deliberately
heavier than the unit tests.
"""

import itertools
import json
import pathlib
import random
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import gateway_config
from tweakcache.cli import main
from tweakcache.embedder import HashedEmbedder
from tweakcache.evalkit.datasets import LabeledPair
from tweakcache.evalkit.debate import run_debate
from tweakcache.evalkit.prsweep import pr_sweep
from tweakcache.gateway import create_app
from tweakcache.llm_client import scripted_mock
from tweakcache.prompts import (
    JUDGE_FACTUAL_HISTORY,
    JUDGE_FACTUAL_INITIAL,
    JUDGE_RELEVANCE_COMPLETENESS,
    JUDGE_USER_EXPERIENCE,
    TWEAK_TEMPLATE,
)
from tweakcache.router import assign_band, build_tweak_prompt
from tweakcache.vector_index import CacheEntry, IndexConfig, VectorIndex

GOLDEN_DIR = pathlib.Path(__file__).parent / "goldens"


def unit_rows(n, dim, rng):
    rows = rng.standard_normal((n, dim))
    return (rows / np.linalg.norm(rows, axis=1, keepdims=True)).astype(np.float32)


@pytest.mark.acceptance(1, "cost model CLI values")
def test_cost_model_cli_values(capsys):
    started = time.monotonic()
    assert main(["eval", "cost", "--hit-fraction", "0.68", "--ratio", "0.04"]) == 0
    high = json.loads(capsys.readouterr().out)
    assert main(["eval", "cost", "--hit-fraction", "0.40", "--ratio", "0.04"]) == 0
    low = json.loads(capsys.readouterr().out)
    elapsed = time.monotonic() - started

    assert high["relative_cost"] == pytest.approx(0.3472, abs=1e-9)
    assert low["relative_cost"] == pytest.approx(0.616, abs=1e-9)
    assert elapsed < 1.0


@pytest.mark.acceptance(2, "full-probe IVF equals flat search")
def test_full_probe_matches_flat_on_randomized_instances():
    started = time.monotonic()
    rng = np.random.default_rng(123)
    dims = [16, 32, 64, 128, 256, 384]
    for instance in range(100):
        if instance < 97:
            n = int(rng.integers(60, 800))
        else:
            n = [2500, 4000, 5000][instance - 97]   # a few at larger scale
        dim = dims[int(rng.integers(len(dims)))]
        nlist = min(n, int(rng.integers(4, 65)))
        config = IndexConfig(dimension=dim, nlist=nlist, nprobe=nlist,
                             kmeans_seed=instance)
        index = VectorIndex(config)
        for j, row in enumerate(unit_rows(n, dim, rng)):
            index.insert(CacheEntry(id=j, query_text=f"q{j}", response_text="",
                                    embedding=row))
        index.train_ivf()
        for query in unit_rows(5, dim, rng):
            ivf = index.search(query, 10, nprobe=nlist)
            flat = index.search_flat(query, 10)
            assert [h.entry_id for h in ivf] == [h.entry_id for h in flat]
            assert [h.similarity for h in ivf] == [h.similarity for h in flat]
    assert time.monotonic() - started < 60.0


@pytest.mark.acceptance(3, "IVF top-1 recall at 10k entries")
def test_default_ivf_recall_at_scale():
    started = time.monotonic()
    dim = 8
    rng = np.random.default_rng(2024)
    index = VectorIndex(IndexConfig(dimension=dim))   # nlist 64 / nprobe 8
    for j, row in enumerate(unit_rows(10_000, dim, rng)):
        index.insert(CacheEntry(id=j, query_text=f"q{j}", response_text="",
                                embedding=row))
    assert index.is_trained                          # activation size reached

    agree = 0
    queries = unit_rows(1_000, dim, rng)
    for query in queries:
        approx = index.search(query, 1)[0].entry_id
        exact = index.search_flat(query, 1)[0].entry_id
        agree += approx == exact
    recall = agree / len(queries)
    assert recall >= 0.95, f"top-1 agreement {recall:.3f}"
    assert time.monotonic() - started < 120.0


@pytest.mark.acceptance(4, "routing end-to-end over the gateway")
def test_routing_sequence_end_to_end():
    started = time.monotonic()
    base = "please explain how rainbows form in the sky"
    near = base + " today"
    mock = scripted_mock(["fresh answer", "tweaked answer"])
    index = VectorIndex(IndexConfig(dimension=384))
    app = create_app(gateway_config(), chat_client=mock, index=index)

    with TestClient(app) as client:
        def ask(prompt):
            return client.post("/v1/chat/completions", json={
                "messages": [{"role": "user", "content": prompt}]
            })

        first = ask(base)
        assert first.headers["x-cache-status"] == "miss"
        assert [r["label"] for r in mock.requests] == ["big"]
        assert index.size() == 1

        second = ask(base)
        assert second.headers["x-cache-status"] == "exact"
        assert [r["label"] for r in mock.requests] == ["big"]   # no new call
        assert index.size() == 1

        third = ask(near)
        assert third.headers["x-cache-status"] == "hit"
        assert [r["label"] for r in mock.requests] == ["big", "small"]
        assert index.size() == 1

    assert third.json()["choices"][0]["message"]["content"] == "tweaked answer"
    assert time.monotonic() - started < 5.0


@pytest.mark.acceptance(5, "prompt resources and assembly are golden")
def test_prompt_goldens():
    current, cached_q, cached_r = (
        "how long do octopuses live",
        "what is the lifespan of an octopus",
        "One to two years for most species.",
    )
    system = build_tweak_prompt(current, cached_q, cached_r)[0]["content"]
    values = {
        "User’s Current prompt:": current,
        "Cached prompt:": cached_q,
        "Cached Response:": cached_r,
    }
    golden = (GOLDEN_DIR / TWEAK_TEMPLATE).read_text(encoding="utf-8")
    expected = "\n".join(
        f"{line} {values[line]}" if line in values else line
        for line in golden.split("\n")
    )
    assert system.encode("utf-8") == expected.encode("utf-8")

    mock = scripted_mock([json.dumps({"verdict": "A", "reasoning": "r"})] * 6)
    from conftest import big_endpoint

    run_debate("a question", "first text", "second text", big_endpoint(),
               client=mock, rng=random.Random(0))
    sequence = [
        JUDGE_FACTUAL_INITIAL,
        JUDGE_USER_EXPERIENCE,
        JUDGE_RELEVANCE_COMPLETENESS,
        JUDGE_FACTUAL_HISTORY,
        JUDGE_USER_EXPERIENCE,
        JUDGE_RELEVANCE_COMPLETENESS,
    ]
    for request, name in zip(mock.requests, sequence):
        sent = request["messages"][0]["content"].encode("utf-8")
        assert sent == (GOLDEN_DIR / name).read_bytes()


@pytest.mark.acceptance(6, "debate order and majority rule")
def test_debate_protocol_exhaustively():
    started = time.monotonic()

    def one_debate(round2):
        script = [json.dumps({"verdict": v, "reasoning": f"r{i}"})
                  for i, v in enumerate(["A", "B", "AB"])]      # round 1 fixed
        script += [json.dumps({"verdict": v, "reasoning": "x"}) for v in round2]
        from conftest import big_endpoint

        return run_debate("q text", "left text", "right text", big_endpoint(),
                          client=scripted_mock(script), rng=random.Random(7))

    for combo in itertools.product(("A", "B", "AB"), repeat=3):
        outcome = one_debate(combo)
        assert [(r.persona, r.round) for r in outcome.records] == [
            ("factual", 1), ("user_experience", 1), ("relevance_completeness", 1),
            ("factual", 2), ("user_experience", 2), ("relevance_completeness", 2),
        ]
        assert [r.verdict for r in outcome.records[3:]] == list(combo)
        # brute-force majority oracle over the three round-2 votes
        expected = "AB"
        for candidate in ("A", "B", "AB"):
            if combo.count(candidate) >= 2:
                expected = candidate
        assert outcome.final_verdict == expected, combo
    assert time.monotonic() - started < 5.0


def distinct_bucket_pool(embedder, pair_id, size=14):
    """Tokens for one pair, filtered so each lands in its own hash bucket;
    that pins the within-pair similarities to exact fractions."""
    pool, seen = [], set()
    j = 0
    while len(pool) < size:
        token = f"pair{pair_id}tok{j}"
        j += 1
        bucket = int(np.argmax(np.abs(embedder.embed(token))))
        if bucket in seen:
            continue
        seen.add(bucket)
        pool.append(token)
    return pool


def synthetic_pairs(embedder, count=200):
    """Planted pair classes with known cosine similarities:
    5/6 duplicates, exact duplicates, 6/sqrt(42) near non-duplicates,
    and disjoint non-duplicates."""
    pairs = []
    for i in range(count):
        pool = distinct_bucket_pool(embedder, i)
        q1 = " ".join(pool[:6])
        variant = i % 4
        if variant == 0:
            q2 = " ".join(pool[:5] + [pool[6]])          # cos 5/6
            dup = True
        elif variant == 1:
            q2 = q1                                      # cos 1.0
            dup = True
        elif variant == 2:
            q2 = " ".join(pool[:6] + [pool[7]])          # cos 6/sqrt(42)
            dup = False
        else:
            q2 = " ".join(pool[8:14])                    # cos ~ 0
            dup = False
        pairs.append(LabeledPair(q1, q2, dup))
    return pairs


@pytest.mark.acceptance(7, "pr-sweep matches a brute-force oracle")
def test_pr_sweep_against_brute_force():
    embedder = HashedEmbedder(384)
    pairs = synthetic_pairs(embedder, 200)
    thresholds = [round(0.70 + 0.01 * i, 10) for i in range(30)]
    points = pr_sweep(pairs, thresholds, embedder=embedder, top_k=5)

    # independent replay of the put/get protocol: the cache holds every
    # earlier question, and a lookup hits iff the best similarity clears
    # the threshold
    vectors = {}

    def vec(text):
        if text not in vectors:
            vectors[text] = embedder.embed(text).astype(np.float64)
        return vectors[text]

    cached = []
    best = []
    for pair in pairs:
        cached.append(vec(pair.question_1))
        query = vec(pair.question_2)
        best.append(max(float(np.dot(row, query)) for row in cached))
        cached.append(vec(pair.question_2))

    for point in points:
        tp = fp = fn = 0
        for pair, top in zip(pairs, best):
            hit = top >= point.threshold
            if hit and pair.is_duplicate:
                tp += 1
            elif hit and not pair.is_duplicate:
                fp += 1
            elif not hit and pair.is_duplicate:
                fn += 1
        assert (point.tp, point.fp, point.fn) == (tp, fp, fn), point.threshold

    recalls = [p.recall for p in points]
    assert all(r is not None for r in recalls)
    assert all(a >= b for a, b in zip(recalls, recalls[1:]))
    # the planted classes make the sweep's shape fully predictable:
    # 5/6 = 0.833 drops out above 0.83, 6/sqrt(42) = 0.926 above 0.92
    by_threshold = {p.threshold: p for p in points}
    assert by_threshold[0.7].recall == 1.0
    assert by_threshold[0.7].fp == 50
    assert by_threshold[0.84].recall == 0.5
    assert by_threshold[0.93].fp == 0
    assert by_threshold[0.99].tp == 50                   # exact copies only


@pytest.mark.acceptance(8, "snapshot round-trip and gateway restart")
def test_persistence_round_trip(tmp_path):
    rng = np.random.default_rng(55)
    index = VectorIndex(IndexConfig(dimension=32))
    for j, row in enumerate(unit_rows(1_000, 32, rng)):
        index.insert(CacheEntry(id=j, query_text=f"q{j}", response_text=f"r{j}",
                                embedding=row))
    path = tmp_path / "thousand.jsonl"
    assert index.snapshot_save(path) == 1_000

    restored = VectorIndex(IndexConfig(dimension=32))
    assert restored.snapshot_load(path) == 1_000
    for query in unit_rows(50, 32, rng):
        before = index.search(query, 10)
        after = restored.search(query, 10)
        assert [(h.entry_id, h.similarity) for h in before] == \
            [(h.entry_id, h.similarity) for h in after]

    # a restarted gateway picks the snapshot up and still exact-hits
    prompt = "what makes popcorn pop"
    gw_path = tmp_path / "gateway.jsonl"
    config = gateway_config(snapshot_path=str(gw_path))
    with TestClient(create_app(config, chat_client=scripted_mock(["kernel steam"]))) as client:
        first = client.post("/v1/chat/completions",
                            json={"messages": [{"role": "user", "content": prompt}]})
        assert first.headers["x-cache-status"] == "miss"

    with TestClient(create_app(config, chat_client=scripted_mock(["unused"]))) as client:
        again = client.post("/v1/chat/completions",
                            json={"messages": [{"role": "user", "content": prompt}]})
        assert again.headers["x-cache-status"] == "exact"
        assert again.json()["choices"][0]["message"]["content"] == "kernel steam"


@pytest.mark.acceptance(9, "stats conservation under concurrent load")
def test_stats_conservation_under_concurrency():
    embedder = HashedEmbedder(384)
    index = VectorIndex(IndexConfig(dimension=384))
    bases = [
        " ".join(f"warm{i}tok{j}" for j in range(6)) for i in range(100)
    ]
    for i, base in enumerate(bases):
        index.append(base, f"warm answer {i}", embedder.embed(base))

    mock = scripted_mock(["canned reply"] * 1_000)
    app = create_app(gateway_config(), chat_client=mock, index=index)

    near = [bases[i % 100] + f" extra{i}" for i in range(300)]      # hit ~6/sqrt(42)
    fresh = [
        " ".join(f"fresh{i}tok{j}" for j in range(6)) for i in range(400)
    ]                                                               # miss
    prompts = [bases[i % 100] for i in range(300)] + near + fresh   # exact + hit + miss
    random.Random(42).shuffle(prompts)
    assert len(prompts) == 1_000

    # Sequential ground truth, computed with the same embedder before any
    # request runs. The margin checks prove routing cannot depend on the
    # order in which concurrent misses land in the cache.
    warm64 = np.stack([embedder.embed(b) for b in bases]).astype(np.float64)
    near64 = np.stack([embedder.embed(q) for q in near]).astype(np.float64)
    fresh64 = np.stack([embedder.embed(q) for q in fresh]).astype(np.float64)
    near_best = (near64 @ warm64.T).max(axis=1)
    assert ((near_best >= 0.7) & (near_best < 1 - 1e-6)).all()      # always a hit
    assert ((near64 @ fresh64.T).max(axis=1) < near_best).all()     # warm entry wins
    assert (fresh64 @ warm64.T).max() < 0.7                         # fresh never hits warm
    fresh_cross = fresh64 @ fresh64.T
    np.fill_diagonal(fresh_cross, -1.0)
    assert fresh_cross.max() < 0.7                                  # nor an earlier miss
    assert ((warm64 @ warm64.T).max(axis=1) >= 1 - 1e-6).all()      # repeats stay exact
    boundaries = np.array([0.7, 0.8, 0.9])
    assert np.abs(near_best[:, None] - boundaries).min() > 1e-3     # bands unambiguous
    expected_bands = {"0.7-0.8": 0, "0.8-0.9": 0, "0.9-1.0": 300}   # the exact repeats
    for sim in near_best:
        expected_bands[assign_band(float(sim)).label] += 1

    with TestClient(app) as client:
        def ask(prompt):
            resp = client.post("/v1/chat/completions", json={
                "messages": [{"role": "user", "content": prompt}]
            })
            assert resp.status_code == 200
            return resp.headers["x-cache-status"]

        with ThreadPoolExecutor(max_workers=32) as pool:
            statuses = list(pool.map(ask, prompts))
        stats = client.get("/admin/stats").json()

    observed = {s: statuses.count(s) for s in ("exact", "hit", "miss")}
    assert observed == {"exact": 300, "hit": 300, "miss": 400}
    assert stats["paths"] == observed
    assert stats["total_requests"] == 1_000
    assert sum(stats["paths"].values()) == 1_000
    assert stats["hit_rate"] == pytest.approx(0.6, abs=1e-12)
    # (1 - 0.3 - 0.3) + 0.3 * 0.04, using the endpoints' price ratio
    assert stats["estimated_relative_cost"] == pytest.approx(0.412, abs=1e-9)
    assert stats["bands"] == expected_bands
    assert sum(stats["bands"].values()) == 600     # every exact/hit was banded
    assert index.size() == 500                     # every miss landed exactly once
