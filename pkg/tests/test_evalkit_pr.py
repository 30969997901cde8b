import json

import httpx
import pytest

from tweakcache.embedder import HashedEmbedder
from tweakcache.errors import EmptyDataset, RemoteUnavailable
from tweakcache.evalkit.datasets import LabeledPair
from tweakcache.evalkit.prsweep import make_http_scorer, pr_sweep

NEAR_PAIR = LabeledPair(
    "please explain how rainbows form in the sky",
    "please explain how rainbows form in the sky today",   # cos ~ 0.943
    True,
)
FAR_PAIR = LabeledPair(
    "what is the boiling point of water",
    "recommend a sturdy hiking backpack",                   # cos ~ 0.0
    False,
)
# different topics that a loose threshold will wrongly match
CLOSE_NON_DUP = LabeledPair(
    "best way to learn violin quickly at home",
    "best way to learn cello quickly at home",              # cos = 7/8
    False,
)


def test_true_positive_at_loose_threshold():
    (point,) = pr_sweep([NEAR_PAIR], [0.5])
    assert (point.tp, point.fp, point.fn) == (1, 0, 0)
    assert point.precision == 1.0
    assert point.recall == 1.0


def test_false_negative_at_strict_threshold():
    (point,) = pr_sweep([NEAR_PAIR], [0.999])
    assert (point.tp, point.fp, point.fn) == (0, 0, 1)
    assert point.precision is None      # nothing was predicted positive
    assert point.recall == 0.0


def test_false_positive_on_close_non_duplicate():
    (point,) = pr_sweep([CLOSE_NON_DUP], [0.8])
    assert (point.tp, point.fp, point.fn) == (0, 1, 0)
    assert point.precision == 0.0
    assert point.recall is None         # no duplicates in the set


def test_true_negative_counts_nowhere():
    (point,) = pr_sweep([FAR_PAIR], [0.7])
    assert (point.tp, point.fp, point.fn) == (0, 0, 0)
    assert point.precision is None
    assert point.recall is None


def test_monotone_tradeoff_across_thresholds():
    pairs = [NEAR_PAIR, FAR_PAIR, CLOSE_NON_DUP]
    points = pr_sweep(pairs, [0.5, 0.9, 0.999])
    assert [p.threshold for p in points] == [0.5, 0.9, 0.999]
    # 7/8 passes 0.5 only; 0.9428 passes 0.5 and 0.9
    assert [(p.tp, p.fp, p.fn) for p in points] == [(1, 1, 0), (1, 0, 0), (0, 0, 1)]
    fps = [p.fp for p in points]
    fns = [p.fn for p in points]
    assert fps == sorted(fps, reverse=True)
    assert fns == sorted(fns)


def test_prior_pairs_stay_in_the_cache():
    # the same question later in the file finds its earlier copy
    repeat = LabeledPair("zebra stripes question", NEAR_PAIR.question_1, False)
    points = pr_sweep([NEAR_PAIR, repeat], [0.9])
    assert points[0].fp == 1


def test_sweep_is_deterministic():
    pairs = [NEAR_PAIR, FAR_PAIR, CLOSE_NON_DUP]
    a = pr_sweep(pairs, [0.6, 0.9])
    b = pr_sweep(pairs, [0.6, 0.9])
    assert a == b


def test_input_validation():
    with pytest.raises(EmptyDataset):
        pr_sweep([], [0.7])
    with pytest.raises(ValueError):
        pr_sweep([NEAR_PAIR], [])
    with pytest.raises(ValueError):
        pr_sweep([NEAR_PAIR], [1.2])
    with pytest.raises(ValueError):
        pr_sweep([NEAR_PAIR], [0.7], top_k=0)


def test_custom_embedder_dimension():
    (point,) = pr_sweep([NEAR_PAIR], [0.5], embedder=HashedEmbedder(64))
    assert point.tp == 1


# --- http re-ranker ------------------------------------------------------------


def scorer_via(handler):
    return make_http_scorer("http://rerank.invalid/score",
                            client=httpx.Client(transport=httpx.MockTransport(handler)))


def test_http_scorer_wire_format():
    seen = []

    def handler(request):
        seen.append(request.read().decode())
        return httpx.Response(200, json={"score": 0.42})

    scorer = scorer_via(handler)
    assert scorer("q text", "c text") == 0.42
    assert json.loads(seen[0]) == {"question": "q text", "candidate": "c text"}


def test_http_scorer_counts_match_cosine_ranker():
    # scores change the ranking, never the hit/miss counts
    def handler(request):
        return httpx.Response(200, json={"score": 1.0})

    pairs = [NEAR_PAIR, FAR_PAIR, CLOSE_NON_DUP]
    with_http = pr_sweep(pairs, [0.5, 0.9], scorer=scorer_via(handler))
    plain = pr_sweep(pairs, [0.5, 0.9])
    assert with_http == plain


def test_http_scorer_failures():
    def error(request):
        return httpx.Response(500, text="nope")

    def missing(request):
        return httpx.Response(200, json={"value": 1})

    with pytest.raises(RemoteUnavailable):
        scorer_via(error)("q", "c")
    with pytest.raises(RemoteUnavailable):
        scorer_via(missing)("q", "c")


def test_http_scorer_used_during_sweep():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(200, json={"score": 0.0})

    pr_sweep([NEAR_PAIR], [0.5], scorer=scorer_via(handler))
    assert calls                       # the re-ranker really was consulted
