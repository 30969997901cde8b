"""Loaders for the pair and corpus file formats.

Pairs come as CSV with a question1,question2,is_duplicate header (extra
columns are ignored). Corpora are JSONL where each record carries either a
bare {"prompt": ...} or a {"conversation": [...]} from which the first user
turn is taken. Blank lines in corpora are skipped.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

from ..errors import FormatError

REQUIRED_PAIR_COLUMNS = ("question1", "question2", "is_duplicate")
_ENGLISH = {"english", "en"}


@dataclass
class LabeledPair:
    question_1: str
    question_2: str
    is_duplicate: bool


def load_pairs(path) -> list[LabeledPair]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in REQUIRED_PAIR_COLUMNS if c not in fields]
        if missing:
            raise FormatError(f"missing column(s): {', '.join(missing)}", 1)
        pairs = []
        for row in reader:
            lineno = reader.line_num
            q1 = (row.get("question1") or "").strip()
            q2 = (row.get("question2") or "").strip()
            flag = (row.get("is_duplicate") or "").strip()
            if not q1 or not q2:
                raise FormatError("both questions must be non-empty", lineno)
            if flag not in ("0", "1"):
                raise FormatError(f"is_duplicate must be 0 or 1, got {flag!r}", lineno)
            pairs.append(LabeledPair(q1, q2, flag == "1"))
    return pairs


def _first_user_turn(conversation, lineno: int) -> str:
    if not isinstance(conversation, list):
        raise FormatError("conversation must be a list of turns", lineno)
    for turn in conversation:
        if isinstance(turn, dict) and turn.get("role") == "user":
            content = turn.get("content")
            if not isinstance(content, str) or not content.strip():
                raise FormatError("first user turn has no text", lineno)
            return content
    raise FormatError("conversation contains no user turn", lineno)


def load_corpus(path, english_only: bool = False, skip_redacted: bool = False) -> list[str]:
    prompts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError as exc:
                raise FormatError(f"invalid JSON ({exc})", lineno)
            if not isinstance(record, dict):
                raise FormatError("expected a JSON object", lineno)
            if english_only:
                language = record.get("language")
                if language is not None and str(language).lower() not in _ENGLISH:
                    continue
            if skip_redacted and record.get("redacted"):
                continue
            if "prompt" in record:
                prompt = record["prompt"]
                if not isinstance(prompt, str) or not prompt.strip():
                    raise FormatError("prompt must be a non-empty string", lineno)
                prompts.append(prompt)
            elif "conversation" in record:
                prompts.append(_first_user_turn(record["conversation"], lineno))
            else:
                raise FormatError("record needs a prompt or a conversation", lineno)
    return prompts
