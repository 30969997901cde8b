"""Small rating helpers."""

from __future__ import annotations

from ..errors import NoVotes


def satisfaction_rating(satisfactory: int, not_satisfactory: int) -> float:
    """Percentage of votes that were satisfactory."""
    if satisfactory < 0 or not_satisfactory < 0:
        raise ValueError("vote counts must be non-negative")
    total = satisfactory + not_satisfactory
    if total == 0:
        raise NoVotes("cannot rate zero votes")
    return 100.0 * satisfactory / total
