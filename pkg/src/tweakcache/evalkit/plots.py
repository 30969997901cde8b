"""Figure rendering for the eval reports. Matplotlib loads lazily so the
plain CLI paths stay fast."""

from __future__ import annotations

import os


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_pr_curve(points, path) -> str:
    """Precision/recall curve over the sweep, annotated with thresholds."""
    plt = _pyplot()
    drawn = [p for p in points if p.precision is not None and p.recall is not None]
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.plot([p.recall for p in drawn], [p.precision for p in drawn],
            marker="o", markersize=3, linewidth=1.2, color="#2c6fbb")
    if drawn:
        for p in (drawn[0], drawn[len(drawn) // 2], drawn[-1]):
            ax.annotate(f"t={p.threshold:.2f}", (p.recall, p.precision),
                        textcoords="offset points", xytext=(6, 4), fontsize=8)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_title("cache precision/recall across thresholds")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return os.fspath(path)


def plot_hit_distribution(dist, path) -> str:
    """Bar chart of query counts per similarity band."""
    plt = _pyplot()
    labels = [f"< {dist.threshold:.2f}"] + list(dist.bands)
    counts = [dist.below_threshold] + [dist.bands[k] for k in dist.bands]
    if dist.hits_outside_bands:
        labels.insert(1, "outside bands")
        counts.insert(1, dist.hits_outside_bands)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    bars = ax.bar(labels, counts, color=["#888888"] + ["#2c6fbb"] * (len(labels) - 1))
    ax.bar_label(bars, padding=2, fontsize=8)
    ax.set_xlabel("top-1 cosine similarity")
    ax.set_ylabel("queries")
    ax.set_title(f"hit distribution ({dist.queried} queries, threshold {dist.threshold:.2f})")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return os.fspath(path)
