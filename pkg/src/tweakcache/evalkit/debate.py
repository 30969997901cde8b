"""Three-persona, two-round judged comparison of two responses.

Six sequential judge calls: factual, user-experience, then
relevance-and-completeness in each round. The factual referee sees no
history on its first call; every other call receives the full transcript so
far. The final verdict is the majority of the three round-2 verdicts, and a
three-way split counts as a draw ("AB"). Which response is shown as A is
randomized per debate and recorded so results can be unblinded.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field

from ..errors import EmptyField, JudgeUnavailable, LlmFailure, VerdictParseError
from ..llm_client import HttpChatClient, ModelEndpoint
from ..prompts import (
    JUDGE_FACTUAL_HISTORY,
    JUDGE_FACTUAL_INITIAL,
    JUDGE_RELEVANCE_COMPLETENESS,
    JUDGE_USER_EXPERIENCE,
    load_prompt,
)

PERSONAS = ("factual", "user_experience", "relevance_completeness")
PERSONA_TITLES = {
    "factual": "Factual Accuracy Evaluator",
    "user_experience": "User Experience Evaluator",
    "relevance_completeness": "Relevance and Completeness Evaluator",
}
VERDICTS = ("A", "B", "AB")

_REPROMPT = (
    'Your previous reply could not be parsed. Respond with only a JSON object '
    'with exactly two keys, "verdict" ("A", "B", or "AB") and "reasoning".'
)


@dataclass
class DebateRecord:
    persona: str
    round: int
    verdict: str
    reasoning: str


@dataclass
class DebateOutcome:
    records: list = field(default_factory=list)
    final_verdict: str = "AB"
    label_assignment: dict = field(default_factory=dict)
    parse_retries: int = 0

    def winner(self) -> str:
        """Unblinded result: response_a, response_b, or tie."""
        if self.final_verdict == "AB":
            return "tie"
        return self.label_assignment[self.final_verdict]


def _system_prompt(persona: str, round_number: int) -> str:
    if persona == "factual":
        name = JUDGE_FACTUAL_INITIAL if round_number == 1 else JUDGE_FACTUAL_HISTORY
    elif persona == "user_experience":
        name = JUDGE_USER_EXPERIENCE
    else:
        name = JUDGE_RELEVANCE_COMPLETENESS
    return load_prompt(name)


def _user_message(question: str, shown_a: str, shown_b: str, records) -> str:
    parts = [f"Question:\n{question}", f"Response A:\n{shown_a}", f"Response B:\n{shown_b}"]
    if records:
        lines = ["History:"]
        for rec in records:
            lines.append(
                f"Round {rec.round} — {PERSONA_TITLES[rec.persona]}\n"
                f"Verdict: {rec.verdict}\n"
                f"Reasoning: {rec.reasoning}"
            )
        parts.append("\n\n".join(lines))
    return "\n\n".join(parts)


def extract_verdict(text: str):
    """Find the first JSON object in ``text`` with exactly the two verdict
    keys; returns (verdict, reasoning) or None."""
    decoder = json.JSONDecoder()
    start = text.find("{")
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(text[start:])
        except ValueError:
            start = text.find("{", start + 1)
            continue
        if (
            isinstance(obj, dict)
            and set(obj) == {"verdict", "reasoning"}
            and isinstance(obj.get("verdict"), str)
            and isinstance(obj.get("reasoning"), str)
            and obj["verdict"].strip() in VERDICTS
        ):
            return obj["verdict"].strip(), obj["reasoning"]
        start = text.find("{", start + 1)
    return None


def majority_verdict(verdicts) -> str:
    counts = Counter(verdicts)
    winner, count = counts.most_common(1)[0]
    return winner if count >= 2 else "AB"


def run_debate(
    question: str,
    response_a: str,
    response_b: str,
    judge: ModelEndpoint,
    *,
    client=None,
    rng: random.Random | None = None,
) -> DebateOutcome:
    for name, value in (("question", question), ("response_a", response_a),
                        ("response_b", response_b)):
        if not value or not value.strip():
            raise EmptyField(f"{name} must be non-empty")
    client = client or HttpChatClient()
    rng = rng or random.Random()

    swapped = rng.random() < 0.5
    shown_a, shown_b = (response_b, response_a) if swapped else (response_a, response_b)
    outcome = DebateOutcome(
        label_assignment={"A": "response_b" if swapped else "response_a",
                          "B": "response_a" if swapped else "response_b"}
    )

    for round_number in (1, 2):
        for persona in PERSONAS:
            system = _system_prompt(persona, round_number)
            user = _user_message(question, shown_a, shown_b, outcome.records)
            messages = [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ]
            verdict = reasoning = None
            for attempt in range(2):
                try:
                    exchange = client.complete(judge, messages)
                except LlmFailure as exc:
                    raise JudgeUnavailable(f"judge call failed: {exc}") from exc
                parsed = extract_verdict(exchange.response_text)
                if parsed is not None:
                    verdict, reasoning = parsed
                    break
                if attempt == 0:
                    outcome.parse_retries += 1
                    messages = messages + [
                        {"role": "assistant", "content": exchange.response_text},
                        {"role": "user", "content": _REPROMPT},
                    ]
            if verdict is None:
                raise VerdictParseError(
                    f"{persona} round {round_number}: no parsable verdict after a reprompt"
                )
            outcome.records.append(DebateRecord(
                persona=persona, round=round_number,
                verdict=verdict, reasoning=reasoning,
            ))

    outcome.final_verdict = majority_verdict(
        [rec.verdict for rec in outcome.records if rec.round == 2]
    )
    return outcome
