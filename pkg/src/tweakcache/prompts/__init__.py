"""Checked-in prompt texts, loaded verbatim.

These files are golden resources: byte-identical copies live under
tests/goldens and the test suite diffs them, so edit with care (several
contain typographic quotes on purpose).
"""

from functools import lru_cache
from importlib import resources

TWEAK_TEMPLATE = "tweak_template.txt"
JUDGE_FACTUAL_INITIAL = "judge_factual_initial.txt"
JUDGE_FACTUAL_HISTORY = "judge_factual_history.txt"
JUDGE_USER_EXPERIENCE = "judge_user_experience.txt"
JUDGE_RELEVANCE_COMPLETENESS = "judge_relevance_completeness.txt"

ALL_PROMPTS = (
    TWEAK_TEMPLATE,
    JUDGE_FACTUAL_INITIAL,
    JUDGE_FACTUAL_HISTORY,
    JUDGE_USER_EXPERIENCE,
    JUDGE_RELEVANCE_COMPLETENESS,
)


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    """Return the named prompt resource as text (UTF-8, cached)."""
    if name not in ALL_PROMPTS:
        raise KeyError(f"unknown prompt resource: {name!r}")
    return resources.files(__package__).joinpath(name).read_text(encoding="utf-8")
