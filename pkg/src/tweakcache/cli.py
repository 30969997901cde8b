"""Command-line entry point.

Subcommands import their dependencies lazily so lightweight calls (notably
``eval cost``) start in well under a second.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .errors import TweakCacheError


def _parse_thresholds(spec: str) -> list[float]:
    """Accept "start:stop:step" (inclusive ends), a comma list, or one value."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError("threshold range must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("threshold step must be positive")
        values = []
        t = start
        while t <= stop + 1e-9:
            values.append(round(t, 10))
            t += step
        return values
    return [float(p) for p in spec.split(",") if p.strip()]


def _listen_parts(listen_address: str):
    host, _, port = listen_address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"listen_address must be host:port, got {listen_address!r}")
    return host, int(port)


def _write_report(report: dict, rows, header, name: str, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"{name}_report.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    csv_path = os.path.join(out_dir, f"{name}_table.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return json_path, csv_path


def _emit(report: dict, rows, header, name: str, args) -> None:
    print(json.dumps(report, indent=2))
    out_dir = args.out or getattr(args, "plot", None)
    if out_dir:
        _write_report(report, rows, header, name, out_dir)


# --- handlers -----------------------------------------------------------


def cmd_serve(args) -> int:
    import uvicorn

    from .config import load_config
    from .gateway import create_app

    config = load_config(args.config)
    host, port = _listen_parts(config.listen_address)
    app = create_app(config)
    uvicorn.run(app, host=host, port=port, log_level=args.log_level)
    return 0


def cmd_snapshot_save(args) -> int:
    import httpx

    url = args.server.rstrip("/") + "/admin/snapshot"
    headers = {}
    if args.token:
        headers["authorization"] = f"Bearer {args.token}"
    try:
        resp = httpx.post(url, json={"path": args.path}, headers=headers, timeout=args.timeout)
    except httpx.HTTPError as exc:
        print(f"error: cannot reach {url}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(resp.json(), indent=2))
    return 0 if resp.status_code == 200 else 1


def cmd_snapshot_load(args) -> int:
    from .vector_index import IndexConfig, VectorIndex

    with open(args.path, encoding="utf-8") as fh:
        first = fh.readline()
    try:
        dimension = json.loads(first).get("dimension")
    except ValueError:
        dimension = None
    if not isinstance(dimension, int) or dimension < 1:
        print("error: line 1: missing or invalid snapshot header", file=sys.stderr)
        return 1
    index = VectorIndex(IndexConfig(dimension=dimension))
    count = index.snapshot_load(args.path)
    print(json.dumps({"path": args.path, "count": count, "dimension": dimension}, indent=2))
    return 0


def cmd_eval_cost(args) -> int:
    from .costmodel import estimate_relative_cost

    cost = estimate_relative_cost(args.hit_fraction, args.ratio, args.exact_fraction)
    report = {
        "hit_fraction": args.hit_fraction,
        "exact_fraction": args.exact_fraction,
        "ratio": args.ratio,
        "relative_cost": cost,
        "percent_of_baseline": 100.0 * cost,
    }
    rows = [[args.hit_fraction, args.exact_fraction, args.ratio, cost]]
    _emit(report, rows, ["hit_fraction", "exact_fraction", "ratio", "relative_cost"],
          "cost", args)
    return 0


def _build_eval_embedder(args):
    from .embedder import HashedEmbedder

    return HashedEmbedder(args.dimension)


def cmd_eval_pr_sweep(args) -> int:
    from .evalkit import load_pairs, make_http_scorer, pr_sweep

    pairs = load_pairs(args.pairs)
    thresholds = _parse_thresholds(args.thresholds)
    scorer = None
    if args.reranker != "cosine":
        if not args.reranker.startswith("http:"):
            raise ValueError("--reranker must be cosine or http:<url>")
        scorer = make_http_scorer(args.reranker[len("http:"):])
    points = pr_sweep(pairs, thresholds, scorer,
                      embedder=_build_eval_embedder(args), top_k=args.top_k)
    report = {
        "pairs": len(pairs),
        "duplicates": sum(1 for p in pairs if p.is_duplicate),
        "reranker": args.reranker,
        "top_k": args.top_k,
        "points": [vars(p) for p in points],
    }
    rows = [[p.threshold, p.tp, p.fp, p.fn,
             "" if p.precision is None else p.precision,
             "" if p.recall is None else p.recall] for p in points]
    _emit(report, rows, ["threshold", "tp", "fp", "fn", "precision", "recall"],
          "pr_sweep", args)
    if args.plot:
        from .evalkit.plots import plot_pr_curve

        os.makedirs(args.plot, exist_ok=True)
        print(plot_pr_curve(points, os.path.join(args.plot, "pr_curve.svg")),
              file=sys.stderr)
    return 0


def cmd_eval_hit_dist(args) -> int:
    from .evalkit import hit_distribution, load_corpus

    prompts = load_corpus(args.corpus, english_only=args.english_only,
                          skip_redacted=args.skip_redacted)
    dist = hit_distribution(prompts, args.split, threshold=args.threshold,
                            embedder=_build_eval_embedder(args))
    report = {
        "corpus_size": len(prompts),
        "inserted": dist.inserted,
        "queried": dist.queried,
        "threshold": dist.threshold,
        "bands": dist.bands,
        "below_threshold": dist.below_threshold,
        "hits_outside_bands": dist.hits_outside_bands,
    }
    rows = [["below_threshold", dist.below_threshold]]
    rows += [[label, count] for label, count in dist.bands.items()]
    if dist.hits_outside_bands:
        rows.append(["hits_outside_bands", dist.hits_outside_bands])
    _emit(report, rows, ["bin", "count"], "hit_dist", args)
    if args.plot:
        from .evalkit.plots import plot_hit_distribution

        os.makedirs(args.plot, exist_ok=True)
        print(plot_hit_distribution(dist, os.path.join(args.plot, "hit_bands.svg")),
              file=sys.stderr)
    return 0


def cmd_eval_debate(args) -> int:
    import random
    from concurrent.futures import ThreadPoolExecutor

    from .evalkit import run_debate
    from .llm_client import HttpChatClient, ModelEndpoint

    items = []
    with open(args.input, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            for key in ("question", "response_a", "response_b"):
                if not isinstance(record.get(key), str) or not record[key].strip():
                    print(f"error: line {lineno}: missing {key}", file=sys.stderr)
                    return 1
            items.append(record)
    if not items:
        print("error: no debate items in input", file=sys.stderr)
        return 1

    judge = ModelEndpoint(label="big", base_url=args.judge, model_name=args.judge_model,
                          api_key_ref=args.judge_key_ref, timeout=args.timeout)
    client = HttpChatClient()

    def one(indexed):
        i, item = indexed
        # independent per-item stream so worker scheduling cannot change results
        rng = random.Random(None if args.seed is None else args.seed * 1_000_003 + i)
        outcome = run_debate(item["question"], item["response_a"], item["response_b"],
                             judge, client=client, rng=rng)
        return i, item, outcome

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        results = sorted(pool.map(one, enumerate(items)), key=lambda r: r[0])

    tally = {"response_a": 0, "response_b": 0, "tie": 0}
    detail = []
    for i, item, outcome in results:
        tally[outcome.winner()] += 1
        detail.append({
            "index": i,
            "id": item.get("id"),
            "final_verdict": outcome.final_verdict,
            "winner": outcome.winner(),
            "label_assignment": outcome.label_assignment,
            "parse_retries": outcome.parse_retries,
            "records": [vars(r) for r in outcome.records],
        })
    report = {"debates": len(items), "tally": tally, "results": detail}
    rows = [[d["index"], d["id"] or "", d["final_verdict"], d["winner"]] for d in detail]
    _emit(report, rows, ["index", "id", "final_verdict", "winner"], "debate", args)
    return 0


# --- parser -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tweakcache",
        description="Semantic response cache for chat models, with an evaluation kit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the caching gateway")
    serve.add_argument("--config", required=True, help="path to the YAML config")
    serve.add_argument("--log-level", default="info")
    serve.set_defaults(func=cmd_serve)

    snapshot = sub.add_parser("snapshot", help="save or inspect cache snapshots")
    snap_sub = snapshot.add_subparsers(dest="snapshot_command", required=True)
    save = snap_sub.add_parser("save", help="ask a running gateway to persist its cache")
    save.add_argument("path", help="file the gateway should write")
    save.add_argument("--server", default="http://127.0.0.1:8080")
    save.add_argument("--token", default=None, help="admin bearer token")
    save.add_argument("--timeout", type=float, default=30.0)
    save.set_defaults(func=cmd_snapshot_save)
    load = snap_sub.add_parser("load", help="validate a snapshot file offline")
    load.add_argument("path")
    load.set_defaults(func=cmd_snapshot_load)

    ev = sub.add_parser("eval", help="evaluation protocols")
    ev_sub = ev.add_subparsers(dest="eval_command", required=True)

    cost = ev_sub.add_parser("cost", help="relative-cost estimate")
    cost.add_argument("--hit-fraction", type=float, required=True)
    cost.add_argument("--ratio", type=float, default=0.04)
    cost.add_argument("--exact-fraction", type=float, default=0.0)
    cost.add_argument("--out", default=None, help="directory for report files")
    cost.set_defaults(func=cmd_eval_cost)

    pr = ev_sub.add_parser("pr-sweep", help="precision/recall threshold sweep")
    pr.add_argument("--pairs", required=True, help="CSV of labeled question pairs")
    pr.add_argument("--thresholds", default="0.70:0.99:0.01")
    pr.add_argument("--reranker", default="cosine", help="cosine or http:<url>")
    pr.add_argument("--top-k", type=int, default=5)
    pr.add_argument("--dimension", type=int, default=384)
    pr.add_argument("--out", default=None)
    pr.add_argument("--plot", default=None, help="directory for SVG figures")
    pr.set_defaults(func=cmd_eval_pr_sweep)

    hd = ev_sub.add_parser("hit-dist", help="insert-half/query-half hit distribution")
    hd.add_argument("--corpus", required=True, help="JSONL corpus of prompts")
    hd.add_argument("--split", type=float, default=0.5)
    hd.add_argument("--threshold", type=float, default=0.7)
    hd.add_argument("--english-only", action="store_true")
    hd.add_argument("--skip-redacted", action="store_true")
    hd.add_argument("--dimension", type=int, default=384)
    hd.add_argument("--out", default=None)
    hd.add_argument("--plot", default=None)
    hd.set_defaults(func=cmd_eval_hit_dist)

    db = ev_sub.add_parser("debate", help="three-persona judged comparisons")
    db.add_argument("--input", required=True,
                    help="JSONL of {question, response_a, response_b}")
    db.add_argument("--judge", required=True, help="judge endpoint base URL")
    db.add_argument("--judge-model", default="gpt-4o")
    db.add_argument("--judge-key-ref", default="OPENAI_API_KEY",
                    help="env var holding the judge API key")
    db.add_argument("--timeout", type=float, default=60.0)
    db.add_argument("--workers", type=int, default=4)
    db.add_argument("--seed", type=int, default=None)
    db.add_argument("--out", default=None)
    db.set_defaults(func=cmd_eval_debate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TweakCacheError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
