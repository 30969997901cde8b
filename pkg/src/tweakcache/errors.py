"""Exception types shared across the package."""

from __future__ import annotations


class TweakCacheError(Exception):
    """Base class for every error raised by this package."""


# --- embedding ---------------------------------------------------------------

class EmptyText(TweakCacheError):
    """Text was empty (or whitespace-only) where content is required."""


class DegenerateEmbedding(TweakCacheError):
    """The text produced a zero vector, which cannot be normalized."""


class DimensionMismatch(TweakCacheError):
    """A vector's length disagrees with the configured dimension."""


class RemoteUnavailable(TweakCacheError):
    """The remote embedding endpoint failed or timed out.

    ``retry_after`` carries the endpoint's Retry-After hint in seconds when
    one was provided, else None.
    """

    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


# --- vector index ------------------------------------------------------------

class DuplicateId(TweakCacheError):
    """An entry with this id is already stored."""


class TooFewEntries(TweakCacheError):
    """Not enough entries to train the requested number of clusters."""


class IoFailure(TweakCacheError):
    """A snapshot file could not be read or written."""


class FormatError(TweakCacheError):
    """A data file is malformed. ``line_number`` is 1-based."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class NonEmptyIndex(TweakCacheError):
    """Snapshot load requires an empty index."""


# --- chat clients ------------------------------------------------------------

class LlmFailure(TweakCacheError):
    """Base class for chat-completion transport/protocol failures."""


class Timeout(LlmFailure):
    """The provider did not answer within the endpoint's timeout."""


class ProviderError(LlmFailure):
    """The provider answered with an error status."""

    def __init__(self, status: int, body_excerpt: str = ""):
        super().__init__(f"provider returned HTTP {status}: {body_excerpt[:200]}")
        self.status = status
        self.body_excerpt = body_excerpt[:200]


class MalformedResponse(LlmFailure):
    """The provider's reply did not contain the expected fields."""


class ScriptExhausted(TweakCacheError):
    """A scripted mock ran out of (matching) canned replies."""


# --- router / gateway --------------------------------------------------------

class EmptyField(TweakCacheError):
    """A required prompt-template field was empty."""


# --- evalkit -----------------------------------------------------------------

class EmptyDataset(TweakCacheError):
    """An evaluation was started with no usable records."""


class JudgeUnavailable(TweakCacheError):
    """The judge endpoint could not be reached or kept failing."""


class VerdictParseError(TweakCacheError):
    """No valid verdict object could be parsed, even after a reprompt."""


class NoVotes(TweakCacheError):
    """A rating was requested over zero votes."""
