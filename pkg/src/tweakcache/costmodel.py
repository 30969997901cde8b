"""Relative-cost arithmetic for the two-model serving split.

Kept free of heavy imports so the CLI's cost command starts fast.
"""

from __future__ import annotations

DEFAULT_COST_RATIO = 0.04  # small model ~25x cheaper per output token


def estimate_relative_cost(
    hit_fraction: float,
    small_to_big_cost_ratio: float,
    exact_fraction: float = 0.0,
) -> float:
    """Expected spend as a fraction of sending every request to the big model.

    Misses pay full price, tweaked hits pay ``ratio``, exact matches are
    served from the cache and pay nothing:

        (1 - hit_fraction - exact_fraction) + hit_fraction * ratio
    """
    if not 0.0 <= hit_fraction <= 1.0:
        raise ValueError("hit_fraction must be in [0, 1]")
    if not 0.0 <= exact_fraction <= 1.0:
        raise ValueError("exact_fraction must be in [0, 1]")
    if hit_fraction + exact_fraction > 1.0 + 1e-12:
        raise ValueError("hit_fraction + exact_fraction must not exceed 1")
    if small_to_big_cost_ratio < 0.0:
        raise ValueError("cost ratio must be non-negative")
    return (1.0 - hit_fraction - exact_fraction) + hit_fraction * small_to_big_cost_ratio
