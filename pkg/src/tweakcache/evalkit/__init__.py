"""Evaluation protocols: PR sweeps, hit distributions, debates, ratings."""

from .datasets import LabeledPair, load_corpus, load_pairs
from .debate import DebateOutcome, DebateRecord, run_debate
from .hitdist import HitDistribution, hit_distribution
from .metrics import satisfaction_rating
from .prsweep import PrPoint, make_http_scorer, pr_sweep

__all__ = [
    "LabeledPair",
    "load_corpus",
    "load_pairs",
    "DebateOutcome",
    "DebateRecord",
    "run_debate",
    "HitDistribution",
    "hit_distribution",
    "satisfaction_rating",
    "PrPoint",
    "make_http_scorer",
    "pr_sweep",
]
